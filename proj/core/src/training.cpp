#include "conceptdrive/training.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "conceptdrive/errors.hpp"
#include "conceptdrive/rng.hpp"
#include "fmt_util.hpp"

namespace conceptdrive {

namespace {

using detail::fmt_double;

void shuffle_indices(std::vector<std::size_t>& idx, SplitMix64& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        std::size_t j = rng.next_below(i);
        std::swap(idx[i - 1], idx[j]);
    }
}

double population_std(const std::vector<double>& xs, double mean) {
    double acc = 0.0;
    for (double x : xs) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / static_cast<double>(xs.size()));
}

}  // namespace

void validate_train_config(const TrainConfig& config) {
    if (config.epochs < 1) throw ParamError("epochs must be >= 1");
    if (config.batch_size < 1) throw ParamError("batch_size must be >= 1");
    if (!(config.learning_rate > 0.0) || !std::isfinite(config.learning_rate))
        throw ParamError("learning_rate must be positive and finite");
    if (!(config.beta1 >= 0.0 && config.beta1 < 1.0))
        throw ParamError("beta1 must lie in [0, 1)");
    if (!(config.beta2 >= 0.0 && config.beta2 < 1.0))
        throw ParamError("beta2 must lie in [0, 1)");
    if (!(config.adam_eps > 0.0)) throw ParamError("adam_eps must be positive");
    if (config.grad_clip && !(*config.grad_clip > 0.0))
        throw ParamError("grad_clip must be positive when set");
    if (config.weight_angle < 0.0 || config.weight_distance < 0.0)
        throw ParamError("task weights must be nonnegative");
    if (config.weight_angle == 0.0 && config.weight_distance == 0.0)
        throw ParamError("at least one task weight must be positive");
    if (!(config.distance_cap > 0.0)) throw ParamError("distance_cap must be positive");
}

double rmse_loss(const std::vector<double>& pred, const std::vector<double>& target) {
    if (pred.empty()) throw ParamError("rmse over an empty batch");
    if (pred.size() != target.size())
        throw ShapeError("rmse: " + std::to_string(pred.size()) + " predictions vs " +
                         std::to_string(target.size()) + " targets");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(pred.size()));
}

NodeId rmse_node(Tape& tape, const std::vector<NodeId>& preds,
                 const std::vector<double>& targets) {
    if (preds.empty()) throw ParamError("rmse over an empty batch");
    if (preds.size() != targets.size())
        throw ShapeError("rmse: " + std::to_string(preds.size()) + " predictions vs " +
                         std::to_string(targets.size()) + " targets");
    NodeId stacked = tape.stack_scalars(preds);
    NodeId wanted = tape.constant(Tensor(1, targets.size(), targets));
    return tape.sqrt(tape.mean(tape.square(tape.sub(stacked, wanted))));
}

double multi_task_loss(double loss_angle, double loss_distance, double weight_angle,
                       double weight_distance) {
    return weight_angle * loss_angle + weight_distance * loss_distance;
}

DatasetSplit split_dataset(std::size_t n, const SplitRatios& ratios, std::uint64_t seed) {
    if (ratios.train < 0.0 || ratios.val < 0.0 || ratios.test < 0.0)
        throw ParamError("split ratios must be nonnegative");
    const double sum = ratios.train + ratios.val + ratios.test;
    if (std::abs(sum - 1.0) > 1e-9)
        throw ParamError("split ratios must sum to 1, got " + fmt_double(sum));
    if (n < 3) throw ParamError("need at least 3 sequences to split, got " + std::to_string(n));

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    SplitMix64 rng(derive_seed(seed, "split"));
    shuffle_indices(idx, rng);

    const auto n_val = static_cast<std::size_t>(static_cast<double>(n) * ratios.val);
    const auto n_test = static_cast<std::size_t>(static_cast<double>(n) * ratios.test);
    const std::size_t n_train = n - n_val - n_test;

    DatasetSplit split;
    split.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train),
                     idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    split.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
    return split;
}

std::vector<DriveSequence> gather(const std::vector<DriveSequence>& all,
                                  const std::vector<std::size_t>& indices) {
    std::vector<DriveSequence> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) {
        if (i >= all.size())
            throw ParamError("split index " + std::to_string(i) + " out of range");
        out.push_back(all[i]);
    }
    return out;
}

bool distance_eligible(const DriveSequence& seq, double cap) {
    return seq.target_distance <= cap;
}

AdamState make_adam_state(const ModelParams& params) {
    AdamState state;
    for_each_param(params, [&](const std::string&, const Tensor& t) {
        state.m.emplace_back(t.rows(), t.cols(), 0.0);
        state.v.emplace_back(t.rows(), t.cols(), 0.0);
    });
    return state;
}

void adam_step(ModelParams& params, const std::vector<Tensor>& grads, AdamState& state,
               const TrainConfig& config) {
    std::vector<std::pair<std::string, Tensor*>> slots;
    for_each_param(params,
                   [&](const std::string& name, Tensor& t) { slots.emplace_back(name, &t); });
    if (grads.size() != slots.size() || state.m.size() != slots.size())
        throw ShapeError("adam_step: gradient list does not match the parameter list");

    // finiteness check and global norm in one sweep
    double sq_norm = 0.0;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (!grads[i].same_shape(*slots[i].second))
            throw ShapeError("adam_step: gradient shape mismatch for " + slots[i].first);
        for (double g : grads[i].storage()) {
            if (!std::isfinite(g))
                throw NumericError("gradient for " + slots[i].first + " is not finite");
            sq_norm += g * g;
        }
    }
    double scale = 1.0;
    if (config.grad_clip) {
        const double norm = std::sqrt(sq_norm);
        if (norm > *config.grad_clip) scale = *config.grad_clip / norm;
    }

    state.step += 1;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));

    for (std::size_t i = 0; i < slots.size(); ++i) {
        auto& p = slots[i].second->storage();
        auto& m = state.m[i].storage();
        auto& v = state.v[i].storage();
        const auto& g = grads[i].storage();
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double gj = g[j] * scale;
            m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * gj;
            v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * gj * gj;
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            p[j] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_eps);
        }
    }
}

namespace {

// Per-sequence tensors reused across epochs: concept scores, standardized
// shifted sensors, standardized targets.
struct PreparedSeq {
    Tensor scores{0, 0};
    Tensor sensors_std{0, 0};
    double angle_std = 0.0;
    double distance_std = 0.0;
    bool distance_ok = false;
};

Tensor standardize_with_norm(const Tensor& sensors, const NormStats& norm) {
    Tensor out = sensors;
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < 3; ++c)
            out.at(r, c) = (out.at(r, c) - norm.sensor_mean.at(0, c)) / norm.sensor_std.at(0, c);
    return out;
}

PreparedSeq prepare_sequence(const DriveSequence& seq, const ConceptSet& set,
                             const NormStats& norm, double cap) {
    PreparedSeq p;
    p.scores = concept_scores(seq.frame_embeddings, set);
    p.sensors_std = standardize_with_norm(shifted_sensors(seq.sensors), norm);
    p.angle_std = (seq.target_angle - norm.target_mean.at(0, 0)) / norm.target_std.at(0, 0);
    p.distance_std =
        (seq.target_distance - norm.target_mean.at(0, 1)) / norm.target_std.at(0, 1);
    p.distance_ok = seq.target_distance <= cap;
    return p;
}

struct StdMae {
    std::optional<double> angle, distance;
};

StdMae eval_standardized(const std::vector<PreparedSeq>& prep, const ModelParams& params,
                         const ModelConfig& config) {
    double angle_err = 0.0, dist_err = 0.0;
    std::size_t n_angle = 0, n_dist = 0;
    for (const PreparedSeq& p : prep) {
        Tape tape;
        BoundParams bound = bind_params(tape, params, false);
        ForwardGraph g = build_forward(tape, p.scores, p.sensors_std, bound, config,
                                       /*training=*/false, nullptr);
        std::size_t slot = 0;
        if (has_angle_head(config)) {
            angle_err += std::abs(tape.value(g.head_outputs[slot++]).item() - p.angle_std);
            ++n_angle;
        }
        if (has_distance_head(config) && p.distance_ok) {
            dist_err += std::abs(tape.value(g.head_outputs[slot]).item() - p.distance_std);
            ++n_dist;
        }
    }
    StdMae out;
    if (n_angle) out.angle = angle_err / static_cast<double>(n_angle);
    if (n_dist) out.distance = dist_err / static_cast<double>(n_dist);
    return out;
}

}  // namespace

FitResult fit(const std::vector<DriveSequence>& train, const std::vector<DriveSequence>& val,
              const ConceptSet& set, const ModelConfig& model_config,
              const TrainConfig& train_config) {
    validate_config(model_config);
    validate_train_config(train_config);
    if (train.empty()) throw ParamError("fit needs a nonempty training split");
    if (set.size() + 3 != model_config.input_dim)
        throw ShapeError("concept set of size " + std::to_string(set.size()) +
                         " does not match input_dim " +
                         std::to_string(model_config.input_dim));

    ModelParams params = init_params(model_config, train_config.seed);

    // Standardization constants come from the training split only. Sensor
    // stats are over raw (unshifted) frames; distance-target stats skip
    // sequences outside the cap, matching what the loss will see.
    const SensorStats sens = compute_sensor_stats(train);
    for (std::size_t c = 0; c < 3; ++c) {
        params.norm.sensor_mean.at(0, c) = sens.mean[c];
        params.norm.sensor_std.at(0, c) = sens.std[c];
    }
    std::vector<double> angles, distances;
    for (const DriveSequence& s : train) {
        angles.push_back(s.target_angle);
        if (distance_eligible(s, train_config.distance_cap))
            distances.push_back(s.target_distance);
    }
    const double a_mean =
        std::accumulate(angles.begin(), angles.end(), 0.0) / static_cast<double>(angles.size());
    params.norm.target_mean.at(0, 0) = a_mean;
    params.norm.target_std.at(0, 0) = std::max(population_std(angles, a_mean), 1e-6);
    if (!distances.empty()) {
        const double d_mean = std::accumulate(distances.begin(), distances.end(), 0.0) /
                              static_cast<double>(distances.size());
        params.norm.target_mean.at(0, 1) = d_mean;
        params.norm.target_std.at(0, 1) = std::max(population_std(distances, d_mean), 1e-6);
    }

    std::vector<PreparedSeq> prep_train, prep_val;
    prep_train.reserve(train.size());
    for (const DriveSequence& s : train)
        prep_train.push_back(prepare_sequence(s, set, params.norm, train_config.distance_cap));
    prep_val.reserve(val.size());
    for (const DriveSequence& s : val)
        prep_val.push_back(prepare_sequence(s, set, params.norm, train_config.distance_cap));

    const bool want_angle = has_angle_head(model_config);
    const bool want_distance = has_distance_head(model_config);

    AdamState adam = make_adam_state(params);
    FitResult result;
    double best_score = std::numeric_limits<double>::infinity();
    std::size_t global_step = 0;

    for (std::size_t epoch = 0; epoch < train_config.epochs; ++epoch) {
        std::vector<std::size_t> order(train.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        SplitMix64 order_rng(derive_seed(train_config.seed, "epoch-order", epoch));
        shuffle_indices(order, order_rng);

        double loss_sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < order.size(); start += train_config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + train_config.batch_size);
            Tape tape;
            BoundParams bound = bind_params(tape, params, true);
            SplitMix64 drop_rng(derive_seed(train_config.seed, "dropout", global_step));
            ++global_step;

            std::vector<NodeId> angle_preds, dist_preds;
            std::vector<double> angle_targets, dist_targets;
            for (std::size_t b = start; b < stop; ++b) {
                const PreparedSeq& p = prep_train[order[b]];
                ForwardGraph g = build_forward(tape, p.scores, p.sensors_std, bound,
                                               model_config, /*training=*/true, &drop_rng);
                std::size_t slot = 0;
                if (want_angle) {
                    angle_preds.push_back(g.head_outputs[slot++]);
                    angle_targets.push_back(p.angle_std);
                }
                if (want_distance && p.distance_ok) {
                    dist_preds.push_back(g.head_outputs[slot]);
                    dist_targets.push_back(p.distance_std);
                }
            }

            std::optional<NodeId> loss;
            if (!angle_preds.empty()) {
                NodeId term =
                    tape.scale(rmse_node(tape, angle_preds, angle_targets),
                               train_config.weight_angle);
                loss = term;
            }
            if (!dist_preds.empty()) {
                NodeId term = tape.scale(rmse_node(tape, dist_preds, dist_targets),
                                         train_config.weight_distance);
                loss = loss ? tape.add(*loss, term) : term;
            }
            if (!loss) continue;  // batch had no usable targets (all beyond the cap)

            const double loss_value = tape.value(*loss).item();
            if (!std::isfinite(loss_value))
                throw NumericError("training loss is not finite at epoch " +
                                   std::to_string(epoch) + ", step " +
                                   std::to_string(global_step - 1));
            tape.backward(*loss);
            std::vector<Tensor> grads;
            grads.reserve(bound.ordered.size());
            for (NodeId id : bound.ordered) grads.push_back(tape.grad(id));
            adam_step(params, grads, adam, train_config);
            loss_sum += loss_value;
            ++steps;
        }

        EpochLog row;
        row.epoch = epoch;
        row.train_loss = steps ? loss_sum / static_cast<double>(steps) : 0.0;
        if (!prep_val.empty()) {
            const StdMae mae = eval_standardized(prep_val, params, model_config);
            row.val_angle_mae = mae.angle;
            row.val_distance_mae = mae.distance;
        }
        result.log.push_back(row);

        const bool has_val = row.val_angle_mae || row.val_distance_mae;
        const double score = has_val ? row.val_angle_mae.value_or(0.0) +
                                           row.val_distance_mae.value_or(0.0)
                                     : row.train_loss;
        if (score < best_score) {
            best_score = score;
            result.params = params;
            result.best_epoch = epoch;
        }
    }
    return result;
}

EvalReport evaluate(const std::vector<DriveSequence>& test, const ConceptSet& set,
                    const ModelParams& params, const ModelConfig& config,
                    double distance_cap) {
    validate_config(config);
    if (test.empty()) throw ParamError("evaluate needs a nonempty split");
    if (!(distance_cap > 0.0)) throw ParamError("distance_cap must be positive");

    struct Sample {
        double err, target;
    };
    std::vector<Sample> angle_samples, dist_samples;
    EvalReport report;

    for (const DriveSequence& seq : test) {
        const ForwardResult r = forward(seq, set, params, config);
        if (has_angle_head(config)) {
            angle_samples.push_back(
                {std::abs(*r.predictions.angle - seq.target_angle), seq.target_angle});
        }
        if (has_distance_head(config)) {
            if (distance_eligible(seq, distance_cap)) {
                dist_samples.push_back({std::abs(*r.predictions.distance - seq.target_distance),
                                        seq.target_distance});
            } else {
                ++report.over_cap;
            }
        }
    }

    report.n_angle = angle_samples.size();
    report.n_distance = dist_samples.size();
    if (!angle_samples.empty()) {
        double acc = 0.0;
        for (const Sample& s : angle_samples) acc += s.err;
        report.angle_mae = acc / static_cast<double>(angle_samples.size());
    }
    if (!dist_samples.empty()) {
        double acc = 0.0;
        for (const Sample& s : dist_samples) acc += s.err;
        report.distance_mae = acc / static_cast<double>(dist_samples.size());
    }

    // distance bins: fixed 10 m bands, last band closed at 70
    if (has_distance_head(config)) {
        static const char* kLabels[7] = {"[0,10)",  "[10,20)", "[20,30)", "[30,40)",
                                         "[40,50)", "[50,60)", "[60,70]"};
        std::array<double, 7> err_sum{};
        std::array<std::size_t, 7> counts{};
        for (const Sample& s : dist_samples) {
            const auto bin = std::min<std::size_t>(6, static_cast<std::size_t>(s.target / 10.0));
            err_sum[bin] += s.err;
            counts[bin] += 1;
        }
        for (std::size_t b = 0; b < 7; ++b) {
            BinStat stat;
            stat.label = kLabels[b];
            stat.count = counts[b];
            stat.mae = counts[b] ? err_sum[b] / static_cast<double>(counts[b]) : 0.0;
            report.distance_bins.push_back(stat);
        }
    }

    // angle bins: deciles of |target|, rank-based so skewed data still fills
    // ten groups
    if (!angle_samples.empty()) {
        std::vector<std::size_t> order(angle_samples.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return std::abs(angle_samples[a].target) < std::abs(angle_samples[b].target);
        });
        std::array<double, 10> err_sum{};
        std::array<std::size_t, 10> counts{};
        std::array<double, 10> lo{}, hi{};
        for (std::size_t rank = 0; rank < order.size(); ++rank) {
            const auto bin =
                std::min<std::size_t>(9, rank * 10 / order.size());
            const Sample& s = angle_samples[order[rank]];
            const double mag = std::abs(s.target);
            if (counts[bin] == 0) lo[bin] = mag;
            hi[bin] = mag;
            err_sum[bin] += s.err;
            counts[bin] += 1;
        }
        for (std::size_t b = 0; b < 10; ++b) {
            BinStat stat;
            char label[64];
            if (counts[b]) {
                std::snprintf(label, sizeof label, "q%zu [%.6g, %.6g]", b, lo[b], hi[b]);
                stat.mae = err_sum[b] / static_cast<double>(counts[b]);
            } else {
                std::snprintf(label, sizeof label, "q%zu", b);
            }
            stat.label = label;
            stat.count = counts[b];
            report.angle_bins.push_back(stat);
        }
    }
    return report;
}

std::vector<AblationRow> ablate_bottleneck(const ConceptSet& full_set,
                                           const std::vector<std::size_t>& sizes,
                                           const std::vector<std::uint64_t>& seeds,
                                           const std::vector<DriveSequence>& data,
                                           const ModelConfig& base_config,
                                           const TrainConfig& train_config) {
    if (sizes.empty() || seeds.empty())
        throw ParamError("ablation needs at least one size and one seed");
    for (std::size_t size : sizes)
        if (size < 1 || size > full_set.size())
            throw ParamError("ablation size " + std::to_string(size) + " outside [1, " +
                             std::to_string(full_set.size()) + "]");

    std::vector<AblationRow> rows;
    rows.reserve(sizes.size() * seeds.size());
    for (std::size_t size : sizes) {
        for (std::uint64_t seed : seeds) {
            const ConceptSet sub = subset_concepts(full_set, size, seed);
            ModelConfig config = base_config;
            config.input_dim = size + 3;
            TrainConfig tc = train_config;
            tc.seed = seed;

            const DatasetSplit split = split_dataset(data.size(), SplitRatios{}, seed);
            const FitResult fitted = fit(gather(data, split.train), gather(data, split.val),
                                         sub, config, tc);
            const EvalReport ev = evaluate(gather(data, split.test), sub, fitted.params,
                                           config, tc.distance_cap);

            AblationRow row;
            row.size_label = size == full_set.size() ? "full" : std::to_string(size);
            row.size = size;
            row.seed = seed;
            row.angle_mae = ev.angle_mae;
            row.distance_mae = ev.distance_mae;
            rows.push_back(row);
        }
    }
    return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::string out = "size,seed,a_mae,d_mae\n";
    for (const AblationRow& r : rows) {
        out += r.size_label;
        out += ',';
        out += std::to_string(r.seed);
        out += ',';
        if (r.angle_mae) out += fmt_double(*r.angle_mae);
        out += ',';
        if (r.distance_mae) out += fmt_double(*r.distance_mae);
        out += '\n';
    }
    return out;
}

BenchReport bench_inference(const ModelParams& params, const ModelConfig& config,
                            std::size_t frames, std::size_t runs) {
    validate_config(config);
    if (frames < 2) throw ParamError("bench needs at least 2 frames");
    if (frames > config.max_seq_len)
        throw ParamError("bench frames exceed max_seq_len " +
                         std::to_string(config.max_seq_len));
    if (runs < 1) throw ParamError("bench needs at least 1 run");
    if (config.input_dim < 4) throw ParamError("config input_dim must be >= 4");

    // Synthesized workload: a unit-row concept set and a random sequence so
    // the timed path includes concept scoring, not just the encoder.
    const std::size_t k = config.input_dim - 3;
    const std::size_t width = 64;
    SplitMix64 rng(derive_seed(0, "bench-workload"));
    Tensor emb(k, width, 0.0);
    for (double& x : emb.storage()) x = rng.next_normal();
    std::vector<std::string> texts;
    texts.reserve(k);
    for (std::size_t i = 0; i < k; ++i) texts.push_back("bench concept " + std::to_string(i));
    const ConceptSet set(texts, emb, SourceTag::generated);

    DriveSequence seq;
    seq.id = "bench";
    seq.frame_embeddings = Tensor(frames, width, 0.0);
    for (double& x : seq.frame_embeddings.storage()) x = rng.next_normal();
    seq.sensors = Tensor(frames, 3, 0.0);
    for (std::size_t t = 0; t < frames; ++t) {
        seq.sensors.at(t, kSensorSpeed) = std::abs(15.0 + rng.next_normal());
        seq.sensors.at(t, kSensorAngle) = rng.next_normal();
        seq.sensors.at(t, kSensorDistance) = std::abs(30.0 + 5.0 * rng.next_normal());
    }
    seq.target_angle = 0.0;
    seq.target_distance = 30.0;
    seq.fps = 4.0f;

    const std::size_t warmups = std::min<std::size_t>(3, runs);
    for (std::size_t w = 0; w < warmups; ++w) (void)forward(seq, set, params, config);

    std::vector<double> times_ms;
    times_ms.reserve(runs);
    for (std::size_t r = 0; r < runs; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        (void)forward(seq, set, params, config);
        const auto t1 = std::chrono::steady_clock::now();
        times_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }

    BenchReport report;
    report.frames = frames;
    report.runs = runs;
    report.mean_ms = std::accumulate(times_ms.begin(), times_ms.end(), 0.0) /
                     static_cast<double>(times_ms.size());
    std::sort(times_ms.begin(), times_ms.end());
    const std::size_t mid = times_ms.size() / 2;
    report.median_ms = times_ms.size() % 2 ? times_ms[mid]
                                           : 0.5 * (times_ms[mid - 1] + times_ms[mid]);
    return report;
}

std::string loss_csv(const std::vector<EpochLog>& log, Task tasks) {
    std::string out = "epoch,split,task,metric,value\n";
    const std::string train_task = to_string(tasks);
    for (const EpochLog& row : log) {
        const std::string e = std::to_string(row.epoch);
        out += e + ",train," + train_task + ",rmse," + fmt_double(row.train_loss) + "\n";
        if (row.val_angle_mae)
            out += e + ",val,angle,mae_std," + fmt_double(*row.val_angle_mae) + "\n";
        if (row.val_distance_mae)
            out += e + ",val,distance,mae_std," + fmt_double(*row.val_distance_mae) + "\n";
    }
    return out;
}

}  // namespace conceptdrive
