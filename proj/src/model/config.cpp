#include "esiqa/model/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace esiqa::model {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

StageArray to_stage_array(const std::vector<std::int64_t>& v, const std::string& key) {
    if (v.size() != 4) throw ConfigError("config: '" + key + "' needs exactly 4 entries");
    StageArray out{};
    for (std::size_t i = 0; i < 4; ++i) {
        if (v[i] <= 0) throw ConfigError("config: '" + key + "' entries must be positive");
        out[i] = static_cast<std::size_t>(v[i]);
    }
    return out;
}

std::vector<std::int64_t> to_list(const StageArray& a) { return {a.begin(), a.end()}; }

std::string list_str(const auto& values) {
    std::string s = "[";
    for (std::size_t i = 0; i < values.size(); ++i) s += (i ? ", " : "") + std::to_string(values[i]);
    return s + "]";
}

std::size_t positive(std::int64_t v, const std::string& key) {
    if (v <= 0) throw ConfigError("config: '" + key + "' must be positive");
    return static_cast<std::size_t>(v);
}

}  // namespace

std::array<std::size_t, 2> default_mlp_hidden(const StageArray& channels) {
    const double total = static_cast<double>(channels[0] + channels[1] + channels[2] + channels[3]);
    const double ratio = std::min(1.0, total / 720.0);
    return {std::max<std::size_t>(4, static_cast<std::size_t>(std::ceil(512.0 * ratio))),
            std::max<std::size_t>(4, static_cast<std::size_t>(std::ceil(64.0 * ratio)))};
}

ModelConfig ModelConfig::named(const std::string& name, DisplayMode mode) {
    const std::string n = lower(name);
    ModelConfig c;
    c.mode = mode;
    if (n == "micro" || n == "m") {
        c.variant = "Micro";
        c.blocks = {2, 2, 8, 4};
        c.channels = {48, 96, 192, 384};
        c.heads = {2, 4, 8, 16};
    } else if (n == "tiny" || n == "t") {
        c.variant = "Tiny";
        c.blocks = {2, 4, 12, 4};
        c.channels = {64, 128, 256, 512};
        c.heads = {2, 4, 8, 16};
    } else if (n == "small" || n == "s") {
        c.variant = "Small";
        c.blocks = {3, 4, 21, 5};
        c.channels = {64, 128, 256, 512};
        c.heads = {2, 4, 8, 16};
    } else if (n == "base" || n == "b") {
        c.variant = "Base";
        c.blocks = {3, 4, 21, 5};
        c.channels = {96, 192, 384, 768};
        c.heads = {3, 6, 12, 24};
    } else {
        throw ConfigError("config: unknown variant '" + name + "' (expected Micro, Tiny, Small or Base)");
    }
    c.mlp_hidden = default_mlp_hidden(c.channels);
    return c.normalized();
}

ModelConfig ModelConfig::reduced(DisplayMode mode) {
    ModelConfig c;
    c.variant = "custom";
    c.blocks = {1, 1, 1, 1};
    c.channels = {8, 16, 32, 64};
    c.heads = {1, 2, 4, 8};
    c.input_side = 32;
    c.ssd_state = 4;
    c.mlp_hidden = default_mlp_hidden(c.channels);
    c.mode = mode;
    return c.normalized();
}

void ModelConfig::validate() const {
    if (patch_stride == 0) throw ConfigError("config: patch_stride must be positive");
    if (input_side == 0 || input_side % total_stride() != 0) {
        throw ConfigError("config: input_side " + std::to_string(input_side) + " must be a positive multiple of " +
                          std::to_string(total_stride()));
    }
    for (std::size_t i = 0; i < 4; ++i) {
        if (blocks[i] == 0 || channels[i] == 0 || heads[i] == 0) {
            throw ConfigError("config: stage " + std::to_string(i + 1) + " has a zero block/channel/head count");
        }
        if (channels[i] % heads[i] != 0) {
            throw ConfigError("config: stage " + std::to_string(i + 1) + " channels " + std::to_string(channels[i]) +
                              " not divisible by heads " + std::to_string(heads[i]));
        }
        if (channels[i] % transposed_heads != 0) {
            throw ConfigError("config: stage " + std::to_string(i + 1) + " channels not divisible by transposed_heads");
        }
    }
    if (variant != "custom") {
        for (std::size_t i = 0; i + 1 < 4; ++i) {
            if (channels[i + 1] != 2 * channels[i]) {
                throw ConfigError("config: named variant channels must double between stages");
            }
        }
    }
    if (ssd_state == 0 || ssd_expand == 0 || ffn_ratio == 0 || transposed_heads == 0) {
        throw ConfigError("config: ssd_state, ssd_expand, ffn_ratio and transposed_heads must be positive");
    }
    if (mlp_hidden[0] == 0 || mlp_hidden[1] == 0) throw ConfigError("config: mlp_hidden entries must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("config: dropout must lie in [0,1)");
}

ModelConfig ModelConfig::normalized() const {
    ModelConfig c = *this;
    if (c.mode == DisplayMode::flat_2d) c.cross_attention = false;
    return c;
}

StageArray ModelConfig::stage_sides() const {
    StageArray sides{};
    std::size_t side = input_side / patch_stride;
    for (std::size_t i = 0; i < 4; ++i) {
        sides[i] = side;
        side /= 2;
    }
    return sides;
}

KvConfig ModelConfig::to_kv() const {
    KvConfig kv;
    kv.set("variant", variant);
    kv.set("blocks", list_str(blocks));
    kv.set("channels", list_str(channels));
    kv.set("heads", list_str(heads));
    kv.set("patch_stride", std::to_string(patch_stride));
    kv.set("mlp_hidden", list_str(mlp_hidden));
    kv.set("mode", std::string(mode_name(mode)));
    kv.set("cross_attention", cross_attention ? "true" : "false");
    kv.set("transposed_attention", transposed_attention ? "true" : "false");
    kv.set("msa_stage", msa_stage ? "true" : "false");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", dropout);
    kv.set("dropout", buf);
    kv.set("input_side", std::to_string(input_side));
    kv.set("ssd_state", std::to_string(ssd_state));
    kv.set("ssd_expand", std::to_string(ssd_expand));
    kv.set("ffn_ratio", std::to_string(ffn_ratio));
    kv.set("transposed_heads", std::to_string(transposed_heads));
    kv.set("symmetric_cross_attention", symmetric_cross_attention ? "true" : "false");
    return kv;
}

ModelConfig ModelConfig::from_kv(const KvConfig& kv) {
    const DisplayMode mode = parse_mode(kv.get_string("mode", "3d_window"));
    const std::string variant = kv.get_string("variant", "custom");
    ModelConfig c = variant == "custom" ? ModelConfig{} : named(variant, mode);
    c.mode = mode;
    c.blocks = to_stage_array(kv.get_int_list("blocks", to_list(c.blocks)), "blocks");
    c.channels = to_stage_array(kv.get_int_list("channels", to_list(c.channels)), "channels");
    c.heads = to_stage_array(kv.get_int_list("heads", to_list(c.heads)), "heads");
    c.patch_stride = positive(kv.get_int("patch_stride", static_cast<std::int64_t>(c.patch_stride)), "patch_stride");
    if (kv.has("mlp_hidden")) {
        const auto h = kv.get_int_list("mlp_hidden", {});
        if (h.size() != 2) throw ConfigError("config: 'mlp_hidden' needs exactly 2 entries");
        c.mlp_hidden = {positive(h[0], "mlp_hidden"), positive(h[1], "mlp_hidden")};
    } else if (kv.has("channels")) {
        c.mlp_hidden = default_mlp_hidden(c.channels);
    }
    c.cross_attention = kv.get_bool("cross_attention", c.cross_attention);
    c.transposed_attention = kv.get_bool("transposed_attention", c.transposed_attention);
    c.msa_stage = kv.get_bool("msa_stage", c.msa_stage);
    c.dropout = kv.get_double("dropout", c.dropout);
    c.input_side = positive(kv.get_int("input_side", static_cast<std::int64_t>(c.input_side)), "input_side");
    c.ssd_state = positive(kv.get_int("ssd_state", static_cast<std::int64_t>(c.ssd_state)), "ssd_state");
    c.ssd_expand = positive(kv.get_int("ssd_expand", static_cast<std::int64_t>(c.ssd_expand)), "ssd_expand");
    c.ffn_ratio = positive(kv.get_int("ffn_ratio", static_cast<std::int64_t>(c.ffn_ratio)), "ffn_ratio");
    c.transposed_heads =
        positive(kv.get_int("transposed_heads", static_cast<std::int64_t>(c.transposed_heads)), "transposed_heads");
    c.symmetric_cross_attention = kv.get_bool("symmetric_cross_attention", c.symmetric_cross_attention);
    c.variant = variant == "custom" ? "custom" : c.variant;
    c = c.normalized();
    c.validate();
    return c;
}

}  // namespace esiqa::model
