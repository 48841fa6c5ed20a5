#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "esiqa/data/kv_config.hpp"
#include "esiqa/data/manifest.hpp"
#include "esiqa/model/esiqanet.hpp"

namespace esiqa::data {

struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LabelMissingError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Regression targets are MOS / kLabelScale.
inline constexpr double kLabelScale = 100.0;

struct TrainConfig {
    model::ModelConfig model = model::ModelConfig::named("micro");
    std::size_t epochs = 50;
    std::size_t batch_size = 8;
    double learning_rate = 1e-3;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::string loss = "mse";
    std::uint64_t seed = 0;
    bool freeze_backbone = false;
    std::size_t max_steps = 0;  // 0: epochs * batches
    bool cosine_schedule = true;

    /// Keys "train.*" plus the model keys.
    KvConfig to_kv() const;
    static TrainConfig from_kv(const KvConfig& kv);
    void validate() const;
};

struct LossRecord {
    std::size_t step = 0;
    std::size_t epoch = 0;
    double learning_rate = 0.0;
    double loss = 0.0;
};

struct TrainResult {
    std::unique_ptr<model::EsiqaNet> model;  // parameters of the best validation loss
    std::vector<LossRecord> trace;
    double best_validation_loss = 0.0;
    std::size_t best_step = 0;
    std::size_t steps = 0;
};

struct TrainOutputs {
    std::string checkpoint_path;  // empty: not written
    std::string trace_path;       // empty: not written
    std::string diagnostics_dir;  // where a non-finite batch is dumped
};

/// AdamW with optional cosine decay on the mean squared error of the
/// prediction against MOS / 100. Validation uses `validation` when given,
/// otherwise the training set, evaluated in eval mode after every epoch.
TrainResult train(const Dataset& train_set, const TrainConfig& config, const Dataset* validation = nullptr,
                  const TrainOutputs& outputs = {});

/// seed,step,epoch,learning_rate,loss
void write_trace(std::ostream& out, const std::vector<LossRecord>& trace, std::uint64_t seed);

/// Eval-mode predictions on the MOS scale, one per sample, in order.
std::vector<double> predict(const model::EsiqaNet& net, const Dataset& data);

/// Mean squared error of predict() against labels on the label scale / 100.
double dataset_loss(const model::EsiqaNet& net, const Dataset& data);

}  // namespace esiqa::data
