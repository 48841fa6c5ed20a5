#pragma once

#include <array>
#include <cstddef>
#include <string>

#include "esiqa/data/kv_config.hpp"
#include "esiqa/display_mode.hpp"

namespace esiqa::model {

using StageArray = std::array<std::size_t, 4>;

/// Architecture description of one ESIQAnet instance.
struct ModelConfig {
    std::string variant = "custom";
    StageArray blocks{2, 2, 8, 4};
    StageArray channels{48, 96, 192, 384};
    StageArray heads{2, 4, 8, 16};
    std::size_t patch_stride = 4;
    std::array<std::size_t, 2> mlp_hidden{512, 64};
    DisplayMode mode = DisplayMode::window_3d;
    bool cross_attention = true;
    bool transposed_attention = true;
    bool msa_stage = true;
    double dropout = 0.1;
    std::size_t input_side = 224;

    // Knobs the architecture leaves open.
    std::size_t ssd_state = 16;       // N, state size per SSD head
    std::size_t ssd_expand = 2;       // value-path width = expand * channels
    std::size_t ffn_ratio = 4;
    std::size_t transposed_heads = 1;
    bool symmetric_cross_attention = false;  // average left->right and right->left

    /// Micro, Tiny, Small or Base (case-insensitive, single letters accepted).
    static ModelConfig named(const std::string& name, DisplayMode mode = DisplayMode::window_3d);
    /// Channels [8,16,32,64], one block per stage, 32x32 input: for tests and smoke runs.
    static ModelConfig reduced(DisplayMode mode = DisplayMode::window_3d);

    /// Throws ConfigError on an inconsistent description.
    void validate() const;
    /// 2d mode has a single view, so cross attention is switched off.
    ModelConfig normalized() const;

    bool uses_right_view() const { return mode != DisplayMode::flat_2d; }
    bool uses_cross_attention() const { return cross_attention && uses_right_view(); }
    std::size_t total_stride() const { return patch_stride * 8; }
    std::size_t feature_length() const { return channels[0] + channels[1] + channels[2] + channels[3]; }
    /// Token grid side per stage: input_side / patch_stride / 2^i.
    StageArray stage_sides() const;

    KvConfig to_kv() const;
    /// Missing keys keep the defaults of `ModelConfig::named(variant)` when a
    /// variant key is present, otherwise the struct defaults.
    static ModelConfig from_kv(const KvConfig& kv);
};

/// Default quality-regression widths [512, 64], scaled by total feature
/// length / 720 for narrower backbones (never below 4).
std::array<std::size_t, 2> default_mlp_hidden(const StageArray& channels);

}  // namespace esiqa::model
