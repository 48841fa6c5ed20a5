#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "esiqa/model/blocks.hpp"
#include "esiqa/model/config.hpp"
#include "esiqa/model/layers.hpp"

namespace esiqa::model {

struct InputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Per-stage features. Token tensors are [B, side*side, channels].
struct StageFeatures {
    std::size_t stage = 0;
    std::size_t side = 0;  // H_i == W_i
    Tensor left;           // V_i^l
    std::optional<Tensor> right;
    Tensor fused;          // F_i
    Tensor enhanced;       // F~_i
    Tensor pooled;         // [B, channels]
};

struct ForwardResult {
    Tensor score;  // [B]
    std::vector<StageFeatures> stages;
};

struct ParameterReport {
    std::size_t total = 0;
    std::size_t backbone = 0;
    std::size_t fusion = 0;      // cross + transposed attention
    std::size_t regression = 0;  // quality MLP
    /// Weights of affine maps whose input and output widths both scale with
    /// the stage channel count.
    std::size_t channel_affine_weights = 0;
};

/// Stereo quality model: shared backbone over both views, per-stage fusion,
/// pooled multi-scale features and an MLP regressor.
class EsiqaNet {
public:
    EsiqaNet(ModelConfig config, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    ParameterSet& parameters() { return params_; }
    const ParameterSet& parameters() const { return params_; }

    /// left/right: [B,S,S,3] with S == input_side. `right` is required unless
    /// the mode is 2d, where it is ignored.
    ForwardResult forward(const Tensor& left, const std::optional<Tensor>& right, bool train,
                          std::mt19937_64& rng) const;
    /// Eval-mode forward of a single sample (batch 1), no graph.
    double predict(const Tensor& left, const std::optional<Tensor>& right) const;

    /// Freezes (or unfreezes) stem, stages and downsampling layers.
    void set_backbone_trainable(bool trainable);

    ParameterReport parameter_report() const;

    static constexpr const char* kBackbonePrefix = "backbone.";
    static constexpr const char* kFusionPrefix = "fusion.";
    static constexpr const char* kHeadPrefix = "head.";

private:
    struct Stage {
        std::vector<VssdBlock> vssd;
        std::vector<MsaBlock> msa;
        std::optional<Conv2d> downsample;  // to the next stage
        std::optional<LayerNorm> downsample_norm;
        std::optional<CrossAttention> cross;
        std::optional<TransposedAttention> transposed;
    };

    Tensor run_stage(const Stage& stage, std::size_t index, const Tensor& tokens, std::size_t side) const;
    void check_input(const Tensor& image, const char* which) const;

    ModelConfig config_;
    ParameterSet params_;
    std::optional<Conv2d> stem_;
    std::optional<LayerNorm> stem_norm_;
    std::vector<Stage> stages_;
    std::vector<Linear> head_;
};

}  // namespace esiqa::model
