#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "conceptdrive/concepts.hpp"
#include "conceptdrive/data.hpp"
#include "conceptdrive/model.hpp"

namespace conceptdrive {

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 8;  // sequences per optimizer step
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    std::optional<double> grad_clip;  // global gradient norm cap
    double weight_angle = 1.0;        // multi-task loss weights
    double weight_distance = 1.0;
    double distance_cap = 70.0;       // sequences beyond this leave the distance task
};

void validate_train_config(const TrainConfig& config);

/// sqrt(mean((pred - target)^2)); the gradient at exactly zero loss is the
/// zero subgradient. Lengths must match and be >= 1.
double rmse_loss(const std::vector<double>& pred, const std::vector<double>& target);

/// Same loss as a tape node over prediction nodes (each 1 x 1).
NodeId rmse_node(Tape& tape, const std::vector<NodeId>& preds,
                 const std::vector<double>& targets);

/// w_a * L_a + w_d * L_d.
double multi_task_loss(double loss_angle, double loss_distance, double weight_angle,
                       double weight_distance);

struct SplitRatios {
    double train = 0.85, val = 0.05, test = 0.10;
};

/// Index partition: seeded shuffle, then contiguous slices. Val and test get
/// floor(n * ratio) each, the remainder goes to train. n < 3 is an error.
struct DatasetSplit {
    std::vector<std::size_t> train, val, test;
};
DatasetSplit split_dataset(std::size_t n, const SplitRatios& ratios, std::uint64_t seed);

std::vector<DriveSequence> gather(const std::vector<DriveSequence>& all,
                                  const std::vector<std::size_t>& indices);

/// True when the sequence stays in the distance task (target within cap).
bool distance_eligible(const DriveSequence& seq, double cap = 70.0);

// ---- optimization ----

struct AdamState {
    std::vector<Tensor> m, v;  // for_each_param order
    std::size_t step = 0;
};

AdamState make_adam_state(const ModelParams& params);

/// Bias-corrected Adam update, in-place on params; `grads` follows
/// for_each_param order. A non-finite gradient aborts with NumericError
/// naming the parameter. Optional global-norm clipping happens first.
void adam_step(ModelParams& params, const std::vector<Tensor>& grads, AdamState& state,
               const TrainConfig& config);

// ---- fit / evaluate ----

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0.0;                  // mean combined RMSE over steps
    std::optional<double> val_angle_mae;      // standardized scale
    std::optional<double> val_distance_mae;   // standardized scale
};

struct FitResult {
    ModelParams params;  // best-validation parameters
    std::vector<EpochLog> log;
    std::size_t best_epoch = 0;
};

/// Full training loop: computes sensor/target standardization from the train
/// split, runs seeded-shuffle minibatch Adam on the combined RMSE, logs one
/// row per epoch, and returns the parameters of the best validation epoch
/// (falling back to train loss when val is empty). NaN loss raises
/// NumericError naming epoch and step.
FitResult fit(const std::vector<DriveSequence>& train, const std::vector<DriveSequence>& val,
              const ConceptSet& set, const ModelConfig& model_config,
              const TrainConfig& train_config);

struct BinStat {
    std::string label;
    std::size_t count = 0;
    double mae = 0.0;
};

struct EvalReport {
    std::optional<double> angle_mae;     // degrees
    std::optional<double> distance_mae;  // meters
    std::size_t n_angle = 0;
    std::size_t n_distance = 0;
    std::size_t over_cap = 0;  // sequences excluded from the distance task
    std::vector<BinStat> distance_bins;  // [0,10), [10,20), ..., [60,70]
    std::vector<BinStat> angle_bins;     // deciles of |target angle|
};

/// MAE per task over the given split, with per-bin breakdowns keyed by
/// ground-truth magnitude. Distance targets over the cap are skipped and
/// counted; bin counts sum to the evaluated sample count.
EvalReport evaluate(const std::vector<DriveSequence>& test, const ConceptSet& set,
                    const ModelParams& params, const ModelConfig& config,
                    double distance_cap = 70.0);

// ---- ablation + benchmark ----

struct AblationRow {
    std::string size_label;  // "24" ... or "full"
    std::size_t size = 0;
    std::uint64_t seed = 0;
    std::optional<double> angle_mae;
    std::optional<double> distance_mae;
};

/// For each (size, seed): draw a concept subset, split the data, train, and
/// evaluate on the test split. A size equal to the full set size is the
/// identity draw, so its row reproduces the unablated pipeline exactly.
std::vector<AblationRow> ablate_bottleneck(const ConceptSet& full_set,
                                           const std::vector<std::size_t>& sizes,
                                           const std::vector<std::uint64_t>& seeds,
                                           const std::vector<DriveSequence>& data,
                                           const ModelConfig& base_config,
                                           const TrainConfig& train_config);

std::string ablation_csv(const std::vector<AblationRow>& rows);

struct BenchReport {
    std::size_t frames = 0;
    std::size_t runs = 0;
    double median_ms = 0.0;
    double mean_ms = 0.0;
};

/// Times evaluation-mode forwards (concept scoring included) on a seeded
/// random sequence of T frames; warm-up runs are excluded from statistics.
BenchReport bench_inference(const ModelParams& params, const ModelConfig& config,
                            std::size_t frames, std::size_t runs);

/// Loss/eval log as append-style CSV: header epoch,split,task,metric,value.
std::string loss_csv(const std::vector<EpochLog>& log, Task tasks);

}  // namespace conceptdrive
