#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "conceptdrive/data.hpp"
#include "conceptdrive/errors.hpp"
#include "conceptdrive/rng.hpp"
#include "conceptdrive/training.hpp"
#include "support.hpp"

using namespace conceptdrive;
using testsupport::max_abs_diff;

namespace {

ModelConfig small_model(std::size_t input_dim, std::size_t max_seq_len) {
    ModelConfig c;
    c.input_dim = input_dim;
    c.model_dim = 8;
    c.n_layers = 1;
    c.n_heads = 2;
    c.window = 4;
    c.ffn_dim = 12;
    c.dropout_rate = 0.1;
    c.max_seq_len = max_seq_len;
    return c;
}

std::vector<Tensor> grads_like(const ModelParams& params, double value) {
    std::vector<Tensor> g;
    for_each_param(params,
                   [&](const std::string&, const Tensor& t) { g.emplace_back(t.rows(), t.cols(), value); });
    return g;
}

std::vector<Tensor> snapshot(const ModelParams& params) {
    std::vector<Tensor> out;
    for_each_param(params, [&](const std::string&, const Tensor& t) { out.push_back(t); });
    return out;
}

SyntheticDataset toy_data(std::size_t n, std::uint64_t seed, double noise = 0.02) {
    SyntheticSpec spec;
    spec.n_sequences = n;
    spec.frames = 8;
    spec.embedding_width = 16;
    spec.n_concepts = 6;
    spec.seed = seed;
    spec.noise_std = noise;
    return generate_synthetic(spec);
}

}  // namespace

TEST_CASE("train config validation") {
    TrainConfig c;
    CHECK_NOTHROW(validate_train_config(c));
    SUBCASE("zero epochs") { c.epochs = 0; }
    SUBCASE("zero batch") { c.batch_size = 0; }
    SUBCASE("zero lr") { c.learning_rate = 0.0; }
    SUBCASE("infinite lr") { c.learning_rate = std::numeric_limits<double>::infinity(); }
    SUBCASE("beta out of range") { c.beta2 = 1.0; }
    SUBCASE("negative clip") { c.grad_clip = -1.0; }
    SUBCASE("both weights zero") { c.weight_angle = c.weight_distance = 0.0; }
    SUBCASE("negative weight") { c.weight_angle = -0.5; }
    SUBCASE("zero cap") { c.distance_cap = 0.0; }
    CHECK_THROWS_AS(validate_train_config(c), ParamError);
}

TEST_CASE("rmse hand values and errors") {
    CHECK(rmse_loss({3.0}, {1.0}) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(rmse_loss({1.0, 0.0}, {0.0, 0.0}) ==
          doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(rmse_loss({5.0, 5.0}, {5.0, 5.0}) == 0.0);
    CHECK_THROWS_AS(rmse_loss({}, {}), ParamError);
    CHECK_THROWS_AS(rmse_loss({1.0}, {1.0, 2.0}), ShapeError);
}

TEST_CASE("the rmse node agrees with the plain function") {
    SplitMix64 rng(3);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t n = 1 + rng.next_below(6);
        std::vector<double> pred, target;
        for (std::size_t i = 0; i < n; ++i) {
            pred.push_back(rng.next_normal());
            target.push_back(rng.next_normal());
        }
        Tape tape;
        std::vector<NodeId> nodes;
        for (const double p : pred) nodes.push_back(tape.leaf(Tensor::scalar(p)));
        const NodeId loss = rmse_node(tape, nodes, target);
        CHECK(tape.value(loss).item() ==
              doctest::Approx(rmse_loss(pred, target)).epsilon(1e-12));
    }
}

TEST_CASE("zero loss propagates the zero subgradient") {
    Tape tape;
    const NodeId a = tape.leaf(Tensor::scalar(2.0));
    const NodeId b = tape.leaf(Tensor::scalar(-1.0));
    const NodeId loss = rmse_node(tape, {a, b}, {2.0, -1.0});
    CHECK(tape.value(loss).item() == 0.0);
    tape.backward(loss);
    CHECK(tape.grad(a).item() == 0.0);
    CHECK(tape.grad(b).item() == 0.0);
}

TEST_CASE("multi-task loss is the weighted sum") {
    CHECK(multi_task_loss(2.0, 3.0, 0.5, 2.0) == doctest::Approx(7.0));
}

TEST_CASE("adam's bias-corrected first step moves by the learning rate") {
    const ModelConfig mc = small_model(9, 8);
    ModelParams params = init_params(mc, 1);
    const std::vector<Tensor> before = snapshot(params);
    AdamState state = make_adam_state(params);
    TrainConfig tc;
    tc.learning_rate = 0.1;

    adam_step(params, grads_like(params, 1.0), state, tc);
    CHECK(state.step == 1);
    const std::vector<Tensor> after = snapshot(params);
    for (std::size_t i = 0; i < after.size(); ++i)
        for (std::size_t j = 0; j < after[i].size(); ++j)
            CHECK(after[i][j] - before[i][j] == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("zero gradients leave parameters in place but advance the step") {
    const ModelConfig mc = small_model(9, 8);
    ModelParams params = init_params(mc, 2);
    const std::vector<Tensor> before = snapshot(params);
    AdamState state = make_adam_state(params);
    TrainConfig tc;

    adam_step(params, grads_like(params, 0.0), state, tc);
    adam_step(params, grads_like(params, 0.0), state, tc);
    CHECK(state.step == 2);
    const std::vector<Tensor> after = snapshot(params);
    for (std::size_t i = 0; i < after.size(); ++i)
        CHECK(max_abs_diff(before[i], after[i]) == 0.0);
}

TEST_CASE("a NaN gradient aborts and names the parameter") {
    const ModelConfig mc = small_model(9, 8);
    ModelParams params = init_params(mc, 3);
    AdamState state = make_adam_state(params);
    std::vector<Tensor> grads = grads_like(params, 1.0);
    grads[0].at(0, 0) = std::nan("");  // input_w comes first
    TrainConfig tc;
    CHECK_THROWS_WITH_AS(adam_step(params, grads, state, tc),
                         doctest::Contains("input_w"), NumericError);
}

TEST_CASE("norm clipping equals pre-scaling the gradients") {
    const ModelConfig mc = small_model(9, 8);
    ModelParams clipped = init_params(mc, 4);
    ModelParams scaled = clipped;

    const std::vector<Tensor> grads = grads_like(clipped, 0.25);
    double sq = 0.0;
    for (const Tensor& g : grads)
        for (const double v : g.storage()) sq += v * v;
    const double norm = std::sqrt(sq);
    const double clip = 0.5;
    REQUIRE(norm > clip);  // the clip must actually engage

    TrainConfig with_clip;
    with_clip.grad_clip = clip;
    AdamState s1 = make_adam_state(clipped);
    adam_step(clipped, grads, s1, with_clip);

    std::vector<Tensor> pre = grads;
    for (Tensor& g : pre)
        for (double& v : g.storage()) v *= clip / norm;
    TrainConfig no_clip;
    AdamState s2 = make_adam_state(scaled);
    adam_step(scaled, pre, s2, no_clip);

    const std::vector<Tensor> a = snapshot(clipped);
    const std::vector<Tensor> b = snapshot(scaled);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(max_abs_diff(a[i], b[i]) < 1e-12);
}

TEST_CASE("a gradient norm under the cap is untouched") {
    const ModelConfig mc = small_model(9, 8);
    ModelParams with_cap = init_params(mc, 5);
    ModelParams without = with_cap;
    const std::vector<Tensor> grads = grads_like(with_cap, 1e-6);

    TrainConfig capped;
    capped.grad_clip = 1e9;
    AdamState s1 = make_adam_state(with_cap);
    adam_step(with_cap, grads, s1, capped);
    TrainConfig plain;
    AdamState s2 = make_adam_state(without);
    adam_step(without, grads, s2, plain);

    const std::vector<Tensor> a = snapshot(with_cap);
    const std::vector<Tensor> b = snapshot(without);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(max_abs_diff(a[i], b[i]) == 0.0);
}

TEST_CASE("split sizes follow the floor rule") {
    const SplitRatios r;
    const DatasetSplit s100 = split_dataset(100, r, 1);
    CHECK(s100.train.size() == 85);
    CHECK(s100.val.size() == 5);
    CHECK(s100.test.size() == 10);

    const DatasetSplit s20 = split_dataset(20, r, 1);
    CHECK(s20.train.size() == 17);
    CHECK(s20.val.size() == 1);
    CHECK(s20.test.size() == 2);

    const DatasetSplit s74 = split_dataset(74, r, 1);
    CHECK(s74.train.size() == 64);
    CHECK(s74.val.size() == 3);
    CHECK(s74.test.size() == 7);
}

TEST_CASE("splits partition the index range for any n and seed") {
    SplitMix64 rng(9);
    const SplitRatios r;
    for (int rep = 0; rep < 500; ++rep) {
        const std::size_t n = 3 + rng.next_below(200);
        const std::uint64_t seed = rng.next_u64();
        const DatasetSplit s = split_dataset(n, r, seed);
        std::set<std::size_t> seen;
        for (const auto* part : {&s.train, &s.val, &s.test})
            for (const std::size_t i : *part) {
                CHECK(i < n);
                CHECK(seen.insert(i).second);  // no duplicates anywhere
            }
        CHECK(seen.size() == n);
    }
}

TEST_CASE("splits are deterministic per seed and differ across seeds") {
    const SplitRatios r;
    const DatasetSplit a = split_dataset(50, r, 7);
    const DatasetSplit b = split_dataset(50, r, 7);
    CHECK(a.train == b.train);
    CHECK(a.val == b.val);
    CHECK(a.test == b.test);
    const DatasetSplit c = split_dataset(50, r, 8);
    CHECK(a.train != c.train);
}

TEST_CASE("split parameter validation") {
    const SplitRatios good;
    CHECK_THROWS_AS(split_dataset(2, good, 1), ParamError);
    SplitRatios bad;
    bad.val = 0.5;  // no longer sums to 1
    CHECK_THROWS_AS(split_dataset(10, bad, 1), ParamError);
    SplitRatios negative;
    negative.train = 1.05;
    negative.val = -0.1;
    CHECK_THROWS_AS(split_dataset(10, negative, 1), ParamError);
}

TEST_CASE("gather range-checks its indices") {
    const auto data = toy_data(4, 1).sequences;
    const auto picked = gather(data, {2, 0});
    REQUIRE(picked.size() == 2);
    CHECK(picked[0].id == data[2].id);
    CHECK(picked[1].id == data[0].id);
    CHECK_THROWS_AS(gather(data, {4}), ParamError);
}

TEST_CASE("distance eligibility is inclusive at the cap") {
    DriveSequence seq = toy_data(1, 2).sequences[0];
    seq.target_distance = 70.0;
    CHECK(distance_eligible(seq, 70.0));
    seq.target_distance = 70.3;
    CHECK_FALSE(distance_eligible(seq, 70.0));
    seq.target_distance = 0.0;
    CHECK(distance_eligible(seq, 70.0));
}

TEST_CASE("fit runs, logs every epoch, and is byte-deterministic") {
    const SyntheticDataset ds = toy_data(12, 31);
    const std::vector<DriveSequence> train(ds.sequences.begin(), ds.sequences.begin() + 10);
    const std::vector<DriveSequence> val(ds.sequences.begin() + 10, ds.sequences.end());
    const ModelConfig mc = small_model(ds.concepts.size() + 3, 8);
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 4;
    tc.seed = 5;

    const FitResult a = fit(train, val, ds.concepts, mc, tc);
    const FitResult b = fit(train, val, ds.concepts, mc, tc);

    REQUIRE(a.log.size() == 2);
    CHECK(a.log[0].epoch == 0);
    CHECK(a.log[1].epoch == 1);
    for (const EpochLog& row : a.log) {
        CHECK(std::isfinite(row.train_loss));
        REQUIRE(row.val_angle_mae.has_value());
        REQUIRE(row.val_distance_mae.has_value());
    }
    CHECK(a.best_epoch < 2);

    const std::vector<Tensor> pa = snapshot(a.params);
    const std::vector<Tensor> pb = snapshot(b.params);
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i)
        for (std::size_t j = 0; j < pa[i].size(); ++j) CHECK(pa[i][j] == pb[i][j]);
    CHECK(a.log[0].train_loss == b.log[0].train_loss);

    // standardization buffers were fitted from the train split
    CHECK(max_abs_diff(a.params.norm.sensor_mean, b.params.norm.sensor_mean) == 0.0);
    CHECK(a.params.norm.target_std.at(0, 0) > 0.0);
    CHECK(a.params.norm.target_std.at(0, 1) > 0.0);
}

TEST_CASE("fit without validation data selects by train loss") {
    const SyntheticDataset ds = toy_data(8, 33);
    const ModelConfig mc = small_model(ds.concepts.size() + 3, 8);
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 4;
    tc.seed = 6;
    const FitResult r = fit(ds.sequences, {}, ds.concepts, mc, tc);
    REQUIRE(r.log.size() == 3);
    for (const EpochLog& row : r.log) {
        CHECK_FALSE(row.val_angle_mae.has_value());
        CHECK_FALSE(row.val_distance_mae.has_value());
    }
    double best = r.log[r.best_epoch].train_loss;
    for (const EpochLog& row : r.log) CHECK(best <= row.train_loss);
}

TEST_CASE("fit rejects bad shapes and empty training sets") {
    const SyntheticDataset ds = toy_data(4, 35);
    const ModelConfig wrong = small_model(ds.concepts.size() + 4, 8);
    TrainConfig tc;
    tc.epochs = 1;
    CHECK_THROWS_AS(fit(ds.sequences, {}, ds.concepts, wrong, tc), ShapeError);
    const ModelConfig mc = small_model(ds.concepts.size() + 3, 8);
    CHECK_THROWS_AS(fit({}, {}, ds.concepts, mc, tc), ParamError);
}

TEST_CASE("a constant predictor's MAE matches the hand computation") {
    SyntheticDataset ds = toy_data(6, 37, 0.0);
    const ModelConfig mc = small_model(ds.concepts.size() + 3, 8);
    ModelParams params = init_params(mc, 1);
    // zero the final head layers: standardized outputs become exactly 0, so
    // predictions sit at the stored target means
    for (HeadParams& h : params.heads) {
        h.w2 = Tensor(h.w2.rows(), h.w2.cols(), 0.0);
        h.b2 = Tensor(1, 1, 0.0);
    }
    const double mean_angle = 1.25;
    const double mean_distance = 40.0;
    params.norm.target_mean = Tensor{{mean_angle, mean_distance}};
    params.norm.target_std = Tensor{{2.0, 5.0}};

    const EvalReport report = evaluate(ds.sequences, ds.concepts, params, mc);
    double a_sum = 0.0, d_sum = 0.0;
    for (const DriveSequence& seq : ds.sequences) {
        a_sum += std::fabs(seq.target_angle - mean_angle);
        d_sum += std::fabs(seq.target_distance - mean_distance);
    }
    REQUIRE(report.angle_mae.has_value());
    REQUIRE(report.distance_mae.has_value());
    CHECK(*report.angle_mae == doctest::Approx(a_sum / 6.0).epsilon(1e-12));
    CHECK(*report.distance_mae == doctest::Approx(d_sum / 6.0).epsilon(1e-12));
    CHECK(report.n_angle == 6);
    CHECK(report.n_distance == 6);
    CHECK(report.over_cap == 0);
}

TEST_CASE("evaluation respects the distance cap and fills the bins") {
    SyntheticDataset ds = toy_data(10, 39, 0.0);
    ds.sequences[0].target_distance = 70.3;  // excluded, counted
    ds.sequences[1].target_distance = 70.0;  // boundary stays in
    const ModelConfig mc = small_model(ds.concepts.size() + 3, 8);
    const ModelParams params = init_params(mc, 2);

    const EvalReport report = evaluate(ds.sequences, ds.concepts, params, mc, 70.0);
    CHECK(report.over_cap == 1);
    CHECK(report.n_distance == 9);
    CHECK(report.n_angle == 10);

    REQUIRE(report.distance_bins.size() == 7);
    CHECK(report.distance_bins[0].label == "[0,10)");
    CHECK(report.distance_bins[6].label == "[60,70]");
    std::size_t d_total = 0;
    for (const BinStat& b : report.distance_bins) d_total += b.count;
    CHECK(d_total == 9);

    REQUIRE(report.angle_bins.size() == 10);
    std::size_t a_total = 0;
    for (const BinStat& b : report.angle_bins) a_total += b.count;
    CHECK(a_total == 10);

    CHECK_THROWS_AS(evaluate({}, ds.concepts, params, mc), ParamError);
}

TEST_CASE("rmse dominates mae on random vectors") {
    SplitMix64 rng(41);
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t n = 1 + rng.next_below(8);
        std::vector<double> pred, target;
        double mae = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            pred.push_back(3.0 * rng.next_normal());
            target.push_back(3.0 * rng.next_normal());
            mae += std::fabs(pred.back() - target.back());
        }
        mae /= static_cast<double>(n);
        CHECK(rmse_loss(pred, target) >= mae - 1e-12);
    }
}

TEST_CASE("csv emitters have a frozen layout") {
    EpochLog e0;
    e0.epoch = 0;
    e0.train_loss = 0.5;
    e0.val_angle_mae = 0.25;
    e0.val_distance_mae = 0.125;
    EpochLog e1;
    e1.epoch = 1;
    e1.train_loss = 0.375;
    CHECK(loss_csv({e0, e1}, Task::both) ==
          "epoch,split,task,metric,value\n"
          "0,train,both,rmse,0.5\n"
          "0,val,angle,mae_std,0.25\n"
          "0,val,distance,mae_std,0.125\n"
          "1,train,both,rmse,0.375\n");

    AblationRow full;
    full.size_label = "full";
    full.size = 6;
    full.seed = 9;
    full.angle_mae = 0.5;
    AblationRow sub;
    sub.size_label = "3";
    sub.size = 3;
    sub.seed = 10;
    sub.angle_mae = 1.5;
    sub.distance_mae = 2.5;
    CHECK(ablation_csv({full, sub}) ==
          "size,seed,a_mae,d_mae\n"
          "full,9,0.5,\n"
          "3,10,1.5,2.5\n");
}

TEST_CASE("the inference benchmark reports sane timings") {
    ModelConfig mc = small_model(9, 16);
    mc.dropout_rate = 0.0;
    const ModelParams params = init_params(mc, 3);
    const BenchReport r = bench_inference(params, mc, 10, 5);
    CHECK(r.frames == 10);
    CHECK(r.runs == 5);
    CHECK(r.median_ms > 0.0);
    CHECK(r.mean_ms > 0.0);
    CHECK_THROWS_AS(bench_inference(params, mc, 40, 5), ParamError);  // beyond max_seq_len
    CHECK_THROWS_AS(bench_inference(params, mc, 10, 0), ParamError);
}
