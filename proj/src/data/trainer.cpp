#include "esiqa/data/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "esiqa/csv.hpp"
#include "esiqa/data/image.hpp"
#include "esiqa/model/checkpoint.hpp"
#include "esiqa/tensor/autograd.hpp"
#include "esiqa/tensor/ops.hpp"

namespace esiqa::data {

KvConfig TrainConfig::to_kv() const {
    KvConfig kv = model.to_kv();
    kv.set("train.epochs", std::to_string(epochs));
    kv.set("train.batch_size", std::to_string(batch_size));
    kv.set("train.learning_rate", csv::fmt(learning_rate));
    kv.set("train.weight_decay", csv::fmt(weight_decay));
    kv.set("train.beta1", csv::fmt(beta1));
    kv.set("train.beta2", csv::fmt(beta2));
    kv.set("train.adam_eps", csv::fmt(adam_eps));
    kv.set("train.loss", loss);
    kv.set("train.seed", std::to_string(seed));
    kv.set("train.freeze_backbone", freeze_backbone ? "true" : "false");
    kv.set("train.max_steps", std::to_string(max_steps));
    kv.set("train.cosine_schedule", cosine_schedule ? "true" : "false");
    return kv;
}

TrainConfig TrainConfig::from_kv(const KvConfig& kv) {
    TrainConfig c;
    KvConfig model_kv;
    for (const auto& key : kv.keys()) {
        if (!key.starts_with("train.")) model_kv.set(key, kv.get_string(key, ""));
    }
    c.model = model::ModelConfig::from_kv(model_kv);
    auto non_negative = [&](const std::string& key, std::int64_t fallback) {
        const std::int64_t v = kv.get_int(key, fallback);
        if (v < 0) throw ConfigError("config: " + key + " must not be negative");
        return static_cast<std::size_t>(v);
    };
    c.epochs = non_negative("train.epochs", static_cast<std::int64_t>(c.epochs));
    c.batch_size = non_negative("train.batch_size", static_cast<std::int64_t>(c.batch_size));
    c.learning_rate = kv.get_double("train.learning_rate", c.learning_rate);
    c.weight_decay = kv.get_double("train.weight_decay", c.weight_decay);
    c.beta1 = kv.get_double("train.beta1", c.beta1);
    c.beta2 = kv.get_double("train.beta2", c.beta2);
    c.adam_eps = kv.get_double("train.adam_eps", c.adam_eps);
    c.loss = kv.get_string("train.loss", c.loss);
    c.seed = static_cast<std::uint64_t>(non_negative("train.seed", static_cast<std::int64_t>(c.seed)));
    c.freeze_backbone = kv.get_bool("train.freeze_backbone", c.freeze_backbone);
    c.max_steps = non_negative("train.max_steps", static_cast<std::int64_t>(c.max_steps));
    c.cosine_schedule = kv.get_bool("train.cosine_schedule", c.cosine_schedule);
    c.validate();
    return c;
}

void TrainConfig::validate() const {
    model.validate();
    if (epochs == 0) throw ConfigError("config: train.epochs must be positive");
    if (batch_size == 0) throw ConfigError("config: train.batch_size must be positive");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("config: train.learning_rate must be >= 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("config: train.weight_decay must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("config: Adam betas must lie in [0,1)");
    if (!(adam_eps > 0.0)) throw ConfigError("config: train.adam_eps must be positive");
    if (loss != "mse") throw ConfigError("config: unsupported loss '" + loss + "' (only mse)");
}

namespace {

struct Batch {
    Tensor left;
    std::optional<Tensor> right;
    Tensor target;
    std::vector<std::string> ids;
};

Batch make_batch(const Dataset& data, const std::vector<std::size_t>& idx, bool stereo) {
    Batch b;
    std::vector<const std::vector<double>*> left, right;
    std::vector<double> target;
    for (std::size_t i : idx) {
        const Sample& s = data.samples[i];
        left.push_back(&s.left);
        if (stereo) {
            if (!s.right) throw TrainingError("trainer: sample " + s.image_id + " has no right view");
            right.push_back(&*s.right);
        }
        target.push_back(s.label.value_or(0.0) / kLabelScale);
        b.ids.push_back(s.image_id);
    }
    b.left = stack_batch(left, data.side);
    if (stereo) b.right = stack_batch(right, data.side);
    b.target = Tensor({idx.size()}, std::move(target), false);
    return b;
}

void check_labels(const Dataset& data) {
    if (data.samples.empty()) throw std::invalid_argument("trainer: empty dataset");
    for (const auto& s : data.samples) {
        if (!s.label) {
            throw LabelMissingError("trainer: no MOS label for image " + s.image_id + " in mode " + std::string(mode_name(data.mode)));
        }
    }
}

void dump_batch(const std::string& dir, const Batch& b, std::size_t step, double loss) {
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
    std::ofstream out(std::filesystem::path(dir) / "nonfinite_batch.txt");
    out << "step = " << step << "\nloss = " << loss << "\n";
    auto stats = [&](const char* name, const Tensor& t) {
        const auto d = t.data();
        std::size_t bad = 0;
        double lo = INFINITY, hi = -INFINITY;
        for (double v : d) {
            if (!std::isfinite(v)) ++bad;
            else {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
        out << name << ": shape " << shape_str(t.shape()) << ", non-finite " << bad << ", min " << lo << ", max " << hi << "\n";
    };
    for (std::size_t i = 0; i < b.ids.size(); ++i) out << "image " << b.ids[i] << " target " << b.target.data()[i] << "\n";
    stats("left", b.left);
    if (b.right) stats("right", *b.right);
}

void copy_parameters(const model::ParameterSet& from, model::ParameterSet& to) {
    const auto& src = from.entries();
    const auto& dst = to.entries();
    for (std::size_t i = 0; i < src.size(); ++i) {
        Tensor t = dst[i].second;
        const auto s = src[i].second.data();
        std::copy(s.begin(), s.end(), t.mutable_data().begin());
    }
}

}  // namespace

std::vector<double> predict(const model::EsiqaNet& net, const Dataset& data) {
    NoGradGuard guard;
    const bool stereo = net.config().uses_right_view();
    std::mt19937_64 rng(0);
    std::vector<double> out;
    constexpr std::size_t kChunk = 16;
    for (std::size_t start = 0; start < data.samples.size(); start += kChunk) {
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < std::min(start + kChunk, data.samples.size()); ++i) idx.push_back(i);
        const Batch b = make_batch(data, idx, stereo);
        const auto res = net.forward(b.left, b.right, false, rng);
        for (double v : res.score.data()) out.push_back(v * kLabelScale);
    }
    return out;
}

double dataset_loss(const model::EsiqaNet& net, const Dataset& data) {
    check_labels(data);
    const auto pred = predict(net, data);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = (pred[i] - *data.samples[i].label) / kLabelScale;
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

TrainResult train(const Dataset& train_set, const TrainConfig& config, const Dataset* validation, const TrainOutputs& outputs) {
    config.validate();
    check_labels(train_set);
    if (validation) check_labels(*validation);
    if (train_set.mode != config.model.mode) {
        throw std::invalid_argument("trainer: dataset mode " + std::string(mode_name(train_set.mode)) +
                                    " differs from the model mode " + std::string(mode_name(config.model.mode)));
    }
    if (train_set.side != config.model.input_side) {
        throw std::invalid_argument("trainer: dataset side " + std::to_string(train_set.side) + " differs from input_side " +
                                    std::to_string(config.model.input_side));
    }

    TrainResult result;
    result.model = std::make_unique<model::EsiqaNet>(config.model, config.seed);
    model::EsiqaNet& net = *result.model;
    if (config.freeze_backbone) net.set_backbone_trainable(false);
    model::EsiqaNet best(config.model, config.seed);

    std::vector<Tensor> params;
    for (const auto& [name, t] : net.parameters().entries()) {
        if (t.requires_grad()) params.push_back(t);
    }
    std::vector<std::vector<double>> m1(params.size()), m2(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        m1[i].assign(params[i].numel(), 0.0);
        m2[i].assign(params[i].numel(), 0.0);
    }

    const bool stereo = config.model.uses_right_view();
    const std::size_t n = train_set.samples.size();
    const std::size_t batches = (n + config.batch_size - 1) / config.batch_size;
    const std::size_t total = config.max_steps ? config.max_steps : config.epochs * batches;
    std::mt19937_64 rng(config.seed ^ 0x5bd1e995ULL);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    result.best_validation_loss = INFINITY;
    std::size_t step = 0;
    for (std::size_t epoch = 0; step < total; ++epoch) {
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
        for (std::size_t start = 0; start < n && step < total; start += config.batch_size) {
            const std::vector<std::size_t> idx(order.begin() + static_cast<long>(start),
                                               order.begin() + static_cast<long>(std::min(start + config.batch_size, n)));
            const Batch b = make_batch(train_set, idx, stereo);
            const auto res = net.forward(b.left, b.right, true, rng);
            const Tensor loss = ops::mse_loss(res.score, b.target);
            const double value = loss.item();
            if (!std::isfinite(value)) {
                dump_batch(outputs.diagnostics_dir, b, step, value);
                throw TrainingError("trainer: non-finite loss at step " + std::to_string(step) + " (batch " +
                                    (b.ids.empty() ? std::string() : b.ids.front()) + ", ...)" +
                                    (outputs.diagnostics_dir.empty() ? "" : "; batch dumped to " + outputs.diagnostics_dir));
            }
            for (auto& p : params) p.zero_grad();
            backward(loss);

            const double lr = config.cosine_schedule
                                  ? config.learning_rate * 0.5 *
                                        (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total)))
                                  : config.learning_rate;
            const double t = static_cast<double>(step + 1);
            const double c1 = 1.0 - std::pow(config.beta1, t), c2 = 1.0 - std::pow(config.beta2, t);
            for (std::size_t k = 0; k < params.size(); ++k) {
                if (!params[k].has_grad()) continue;
                auto w = params[k].mutable_data();
                const auto g = params[k].grad();
                for (std::size_t j = 0; j < w.size(); ++j) {
                    m1[k][j] = config.beta1 * m1[k][j] + (1.0 - config.beta1) * g[j];
                    m2[k][j] = config.beta2 * m2[k][j] + (1.0 - config.beta2) * g[j] * g[j];
                    w[j] -= lr * (config.weight_decay * w[j] + (m1[k][j] / c1) / (std::sqrt(m2[k][j] / c2) + config.adam_eps));
                }
            }
            result.trace.push_back({step, epoch, lr, value});
            ++step;
        }
        const double val = dataset_loss(net, validation ? *validation : train_set);
        if (val < result.best_validation_loss) {
            result.best_validation_loss = val;
            result.best_step = step;
            copy_parameters(net.parameters(), best.parameters());
        }
    }
    for (auto& p : params) p.zero_grad();
    result.steps = step;
    copy_parameters(best.parameters(), net.parameters());

    if (!outputs.checkpoint_path.empty()) {
        KvConfig meta;
        meta.set("seed", std::to_string(config.seed));
        meta.set("best_step", std::to_string(result.best_step));
        meta.set("best_validation_loss", csv::fmt(result.best_validation_loss));
        meta.set("freeze_backbone", config.freeze_backbone ? "true" : "false");
        model::save_checkpoint(outputs.checkpoint_path, net, meta);
    }
    if (!outputs.trace_path.empty()) {
        std::ofstream out(outputs.trace_path);
        if (!out) throw TrainingError("trainer: cannot write " + outputs.trace_path);
        write_trace(out, result.trace, config.seed);
    }
    return result;
}

void write_trace(std::ostream& out, const std::vector<LossRecord>& trace, std::uint64_t seed) {
    csv::write_row(out, {"seed", "step", "epoch", "learning_rate", "loss"});
    for (const auto& r : trace) {
        csv::write_row(out, {std::to_string(seed), std::to_string(r.step), std::to_string(r.epoch), csv::fmt(r.learning_rate), csv::fmt(r.loss)});
    }
}

}  // namespace esiqa::data
