#include "esiqa/model/esiqanet.hpp"

#include <string>

#include "esiqa/tensor/ops.hpp"

namespace esiqa::model {

namespace {

std::string stage_name(std::size_t i) { return "stage" + std::to_string(i + 1); }

}  // namespace

EsiqaNet::EsiqaNet(ModelConfig config, std::uint64_t seed) : config_(config.normalized()) {
    config_.validate();
    ParamBuilder root(params_, seed);
    ParamBuilder backbone = root.scoped("backbone");
    ParamBuilder fusion = root.scoped("fusion");
    ParamBuilder head = root.scoped("head");

    const std::size_t s = config_.patch_stride;
    stem_ = Conv2d::make(backbone.scoped("stem"), 3, config_.channels[0], 2 * s - 1, s, s - 1);
    stem_norm_ = LayerNorm::make(backbone.scoped("stem_norm"), config_.channels[0]);

    for (std::size_t i = 0; i < 4; ++i) {
        const std::size_t c = config_.channels[i];
        ParamBuilder sb = backbone.scoped(stage_name(i));
        Stage stage;
        const bool msa = i == 3 && config_.msa_stage;
        for (std::size_t b = 0; b < config_.blocks[i]; ++b) {
            ParamBuilder bb = sb.scoped("block" + std::to_string(b));
            if (msa) {
                stage.msa.emplace_back(bb, c, config_.heads[i], config_.ffn_ratio);
            } else {
                stage.vssd.emplace_back(bb, c, config_.heads[i], config_.ssd_state, config_.ssd_expand,
                                        config_.ffn_ratio);
            }
        }
        if (i + 1 < 4) {
            stage.downsample = Conv2d::make(sb.scoped("down"), c, config_.channels[i + 1], 3, 2, 1);
            stage.downsample_norm = LayerNorm::make(sb.scoped("down_norm"), config_.channels[i + 1]);
        }
        ParamBuilder fb = fusion.scoped(stage_name(i));
        if (config_.uses_cross_attention()) {
            stage.cross.emplace(fb.scoped("cross"), c, config_.heads[i], config_.symmetric_cross_attention);
        }
        if (config_.transposed_attention) stage.transposed.emplace(fb.scoped("transposed"), c, config_.transposed_heads);
        stages_.push_back(std::move(stage));
    }

    const std::size_t widths[4] = {config_.feature_length(), config_.mlp_hidden[0], config_.mlp_hidden[1], 1};
    for (std::size_t l = 0; l < 3; ++l) {
        head_.push_back(Linear::make(head.scoped("fc" + std::to_string(l)), widths[l], widths[l + 1]));
    }
}

void EsiqaNet::check_input(const Tensor& image, const char* which) const {
    if (image.dim() != 4 || image.size(3) != 3) {
        throw InputError(std::string(which) + " view must be [B,S,S,3], got " + shape_str(image.shape()));
    }
    if (image.size(1) != image.size(2)) {
        throw InputError(std::string(which) + " view is not square: " + shape_str(image.shape()));
    }
    if (image.size(1) % config_.total_stride() != 0) {
        throw InputError(std::string(which) + " view side " + std::to_string(image.size(1)) +
                         " is not divisible by the cumulative stride " + std::to_string(config_.total_stride()));
    }
    if (image.size(1) != config_.input_side) {
        throw InputError(std::string(which) + " view side " + std::to_string(image.size(1)) +
                         " differs from the configured input side " + std::to_string(config_.input_side));
    }
}

Tensor EsiqaNet::run_stage(const Stage& stage, std::size_t, const Tensor& tokens, std::size_t side) const {
    Tensor x = tokens;
    for (const auto& block : stage.vssd) x = block(x, side, side);
    for (const auto& block : stage.msa) x = block(x);
    return x;
}

ForwardResult EsiqaNet::forward(const Tensor& left, const std::optional<Tensor>& right, bool train,
                                std::mt19937_64& rng) const {
    check_input(left, "left");
    const bool stereo = config_.uses_right_view();
    if (stereo) {
        if (!right) throw InputError("right view required in display mode " + std::string(mode_name(config_.mode)));
        check_input(*right, "right");
        if (right->shape() != left.shape()) {
            throw InputError("left/right extents differ: " + shape_str(left.shape()) + " vs " + shape_str(right->shape()));
        }
    }
    const std::size_t nb = left.size(0);
    const auto sides = config_.stage_sides();

    auto embed = [&](const Tensor& image) {
        const Tensor x = (*stem_)(image);
        return (*stem_norm_)(ops::reshape(x, {nb, sides[0] * sides[0], config_.channels[0]}));
    };
    Tensor tl = embed(left);
    std::optional<Tensor> tr;
    if (stereo) tr = embed(*right);

    ForwardResult result;
    std::vector<Tensor> pooled;
    for (std::size_t i = 0; i < 4; ++i) {
        const Stage& stage = stages_[i];
        const std::size_t side = sides[i];
        StageFeatures f;
        f.stage = i;
        f.side = side;
        f.left = run_stage(stage, i, tl, side);
        if (tr) f.right = run_stage(stage, i, *tr, side);
        f.fused = stage.cross ? (*stage.cross)(f.left, *f.right) : f.left;
        f.enhanced = stage.transposed ? (*stage.transposed)(f.fused) : f.fused;
        f.pooled = ops::mean(f.enhanced, {1});
        pooled.push_back(f.pooled);

        if (stage.downsample) {
            const std::size_t c = config_.channels[i];
            const std::size_t next = sides[i + 1];
            auto down = [&](const Tensor& tokens) {
                const Tensor grid = ops::reshape(tokens, {nb, side, side, c});
                const Tensor y = (*stage.downsample)(grid);
                return (*stage.downsample_norm)(ops::reshape(y, {nb, next * next, config_.channels[i + 1]}));
            };
            tl = down(f.left);
            if (tr) tr = down(*f.right);
        }
        result.stages.push_back(std::move(f));
    }

    Tensor h = ops::concat(pooled, 1);
    h = ops::dropout(ops::relu(head_[0](h)), config_.dropout, train, rng);
    h = ops::dropout(ops::relu(head_[1](h)), config_.dropout, train, rng);
    result.score = ops::reshape(head_[2](h), {nb});
    return result;
}

double EsiqaNet::predict(const Tensor& left, const std::optional<Tensor>& right) const {
    NoGradGuard no_grad;
    std::mt19937_64 rng(0);
    auto add_batch = [](const Tensor& t) {
        if (t.dim() == 3) return ops::reshape(t, {1, t.size(0), t.size(1), t.size(2)});
        return t;
    };
    std::optional<Tensor> r;
    if (right) r = add_batch(*right);
    return forward(add_batch(left), r, false, rng).score.data()[0];
}

void EsiqaNet::set_backbone_trainable(bool trainable) { params_.set_requires_grad(kBackbonePrefix, trainable); }

ParameterReport EsiqaNet::parameter_report() const {
    ParameterReport r;
    for (const auto& [name, t] : params_.entries()) {
        r.total += t.numel();
        if (name.starts_with(kBackbonePrefix)) r.backbone += t.numel();
        if (name.starts_with(kFusionPrefix)) r.fusion += t.numel();
        if (name.starts_with(kHeadPrefix)) r.regression += t.numel();
        const bool fixed_width = name.find("b_proj") != std::string::npos || name.find("c_proj") != std::string::npos ||
                                 name.find("dt_proj") != std::string::npos;
        if (t.dim() == 2 && !fixed_width && !name.starts_with(kHeadPrefix)) r.channel_affine_weights += t.numel();
    }
    return r;
}

}  // namespace esiqa::model
