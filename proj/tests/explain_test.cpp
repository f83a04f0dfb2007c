#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>

#include "json.hpp"

#include "conceptdrive/explain.hpp"
#include "conceptdrive/errors.hpp"
#include "conceptdrive/rng.hpp"
#include "conceptdrive/stopwords.hpp"
#include "support.hpp"

using namespace conceptdrive;
using testsupport::random_tensor;

namespace {

/// Straight recount of window occurrence totals, no shared code with the
/// implementation: sort each row fully, count the first k indices per frame.
std::vector<std::map<std::size_t, std::size_t>> brute_counts(const Tensor& scores,
                                                             std::size_t window_frames,
                                                             std::size_t k_per_frame) {
    std::vector<std::map<std::size_t, std::size_t>> out;
    for (std::size_t start = 0; start < scores.rows(); start += window_frames) {
        const std::size_t stop = std::min(scores.rows(), start + window_frames);
        std::map<std::size_t, std::size_t> counts;
        for (std::size_t t = start; t < stop; ++t) {
            std::vector<std::pair<double, std::size_t>> row;
            for (std::size_t j = 0; j < scores.cols(); ++j)
                row.emplace_back(-scores.at(t, j), j);  // negate: sort ascending
            std::sort(row.begin(), row.end());
            for (std::size_t r = 0; r < std::min(k_per_frame, scores.cols()); ++r)
                ++counts[row[r].second];
        }
        out.push_back(std::move(counts));
    }
    return out;
}

std::vector<double> random_walk(std::size_t n, std::uint64_t seed, double step = 0.01) {
    SplitMix64 rng(seed);
    std::vector<double> out(n, 0.5);
    for (std::size_t i = 1; i < n; ++i) out[i] = out[i - 1] + step * rng.next_normal();
    return out;
}

}  // namespace

TEST_CASE("per-frame shortlists match the single-row selector") {
    SplitMix64 rng(2);
    const Tensor scores = random_tensor(7, 9, rng);
    const auto lists = per_frame_top_k(scores, 4);
    REQUIRE(lists.size() == 7);
    for (std::size_t t = 0; t < 7; ++t) {
        const auto expect = top_k_concepts(scores, t, 4);
        REQUIRE(lists[t].size() == 4);
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(lists[t][i].index == expect[i].index);
            CHECK(lists[t][i].score == expect[i].score);
        }
    }
    // k beyond the concept count is clamped, not an error
    CHECK(per_frame_top_k(scores, 50)[0].size() == 9);
    CHECK_THROWS_AS(per_frame_top_k(scores, 0), ParamError);
}

TEST_CASE("window aggregation matches a brute-force recount") {
    SplitMix64 rng(4);
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t T = 1 + rng.next_below(45);
        const std::size_t k = 3 + rng.next_below(10);
        const std::size_t window_frames = 1 + rng.next_below(12);
        const std::size_t k_per_frame = 1 + rng.next_below(k);
        Tensor scores(T, k, 0.0);
        for (double& x : scores.storage())
            x = (rng.next_below(2) ? 1.0 : -1.0) * rng.next_double();

        const auto got = aggregate_top_concepts(scores, window_frames, k_per_frame);
        const auto want = brute_counts(scores, window_frames, k_per_frame);
        REQUIRE(got.size() == want.size());

        for (std::size_t w = 0; w < got.size(); ++w) {
            CHECK(got[w].first_frame == w * window_frames);
            const std::size_t expect_frames =
                std::min(T - w * window_frames, window_frames);
            CHECK(got[w].n_frames == expect_frames);

            REQUIRE(got[w].counts.size() == k);
            double fraction_sum = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                const auto it = want[w].find(j);
                const std::size_t expect = it == want[w].end() ? 0 : it->second;
                CHECK(got[w].counts[j] == expect);
                fraction_sum += static_cast<double>(got[w].counts[j]) /
                                static_cast<double>(got[w].n_frames);
            }
            CHECK(fraction_sum ==
                  doctest::Approx(static_cast<double>(std::min(k_per_frame, k)))
                      .epsilon(1e-9));

            // top list: highest counts first, ties to the lower index
            CHECK(got[w].top.size() <= 3);
            for (std::size_t i = 0; i < got[w].top.size(); ++i) {
                const ConceptFraction& cf = got[w].top[i];
                CHECK(cf.count == got[w].counts[cf.index]);
                CHECK(cf.count > 0);
                CHECK(cf.fraction ==
                      doctest::Approx(static_cast<double>(cf.count) /
                                      static_cast<double>(got[w].n_frames)));
                if (i > 0) {
                    const ConceptFraction& prev = got[w].top[i - 1];
                    CHECK((prev.count > cf.count ||
                           (prev.count == cf.count && prev.index < cf.index)));
                }
            }
        }
    }
}

TEST_CASE("a concept ranked first everywhere aggregates to fraction one") {
    Tensor scores(23, 4, 0.0);
    for (std::size_t t = 0; t < 23; ++t) scores.at(t, 2) = 1.0;
    const auto windows = aggregate_top_concepts(scores, 10, 1);
    REQUIRE(windows.size() == 3);
    CHECK(windows[2].n_frames == 3);
    for (const AggregateWindow& w : windows) {
        REQUIRE(!w.top.empty());
        CHECK(w.top[0].index == 2);
        CHECK(w.top[0].fraction == doctest::Approx(1.0));
    }
}

TEST_CASE("aggregation rejects degenerate parameters") {
    const Tensor scores(4, 3, 0.5);
    CHECK_THROWS_AS(aggregate_top_concepts(scores, 0, 1), ParamError);
    CHECK_THROWS_AS(aggregate_top_concepts(scores, 5, 0), ParamError);
    CHECK_THROWS_AS(aggregate_top_concepts(Tensor(0, 3, 0.0), 5, 1), ParamError);
}

TEST_CASE("attention series averages the final layer's heads") {
    AttentionTrace trace;
    trace.layers.resize(2);
    HeadTrace h1;
    h1.cls_self = 0.4;
    h1.cls_frames = {0.2, 0.1, 0.3};
    HeadTrace h2;
    h2.cls_self = 0.1;
    h2.cls_frames = {0.5, 0.3, 0.1};
    trace.layers[0].heads = {h2, h2};  // earlier layer must be ignored
    trace.layers[1].heads = {h1, h2};

    const std::vector<double> series = attention_series(trace);
    REQUIRE(series.size() == 3);
    CHECK(series[0] == doctest::Approx(0.35).epsilon(1e-12));
    CHECK(series[1] == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(series[2] == doctest::Approx(0.2).epsilon(1e-12));

    AttentionTrace empty;
    CHECK_THROWS_AS(attention_series(empty), ParamError);
}

TEST_CASE("spike detection ignores constant and uniformly drifting series") {
    CHECK(detect_spikes(std::vector<double>(16, 0.25)).empty());
    std::vector<double> ramp;
    for (int i = 0; i < 16; ++i) ramp.push_back(0.125 * i);  // exact in binary
    // every first difference identical: MAD and max deviation are both zero
    CHECK(detect_spikes(ramp).empty());
    CHECK_THROWS_AS(detect_spikes(std::vector<double>(7, 0.1)), ParamError);
}

TEST_CASE("a single step lands exactly one event at the step frame") {
    std::vector<double> series(16, 0.1);
    for (std::size_t i = 7; i < 16; ++i) series[i] = 0.9;  // jump arriving at frame 7

    const auto events = detect_spikes(series);
    REQUIRE(events.size() == 1);
    CHECK(events[0].frame == 7);
    CHECK(events[0].direction == SpikeDirection::rise);
    CHECK(events[0].z > 2.5);
    CHECK(events[0].delta == doctest::Approx(0.8));

    // mirrored series flips the direction, keeps the frame
    std::vector<double> flipped;
    for (const double v : series) flipped.push_back(1.0 - v);
    const auto down = detect_spikes(flipped);
    REQUIRE(down.size() == 1);
    CHECK(down[0].frame == 7);
    CHECK(down[0].direction == SpikeDirection::drop);
}

TEST_CASE("detection is invariant under positive affine maps") {
    std::vector<double> series = random_walk(64, 11);
    series[20] += 0.4;  // one planted spike
    for (std::size_t i = 21; i < 64; ++i) series[i] += 0.4;

    const auto base = detect_spikes(series);
    REQUIRE(!base.empty());

    std::vector<double> mapped;
    for (const double v : series) mapped.push_back(3.7 * v - 2.0);
    const auto moved = detect_spikes(mapped);
    REQUIRE(moved.size() == base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
        CHECK(moved[i].frame == base[i].frame);
        CHECK(moved[i].direction == base[i].direction);
        CHECK(moved[i].z == doctest::Approx(base[i].z).epsilon(1e-9));
    }
}

TEST_CASE("close events merge toward the larger deviation") {
    std::vector<double> series(24, 0.0);
    // two jumps two frames apart; the second is bigger
    for (std::size_t i = 10; i < 24; ++i) series[i] += 0.3;
    for (std::size_t i = 12; i < 24; ++i) series[i] += 0.9;

    const auto merged = detect_spikes(series, 2.5, 4);
    REQUIRE(merged.size() == 1);
    CHECK(merged[0].frame == 12);

    // with a gap of 1 both survive
    const auto separate = detect_spikes(series, 2.5, 1);
    CHECK(separate.size() == 2);
}

TEST_CASE("reveal flags cover the event and the hold-off tail only") {
    SpikeEvent e;
    e.frame = 10;
    const std::vector<bool> flags = reveal_decision({e}, 20, 4);
    REQUIRE(flags.size() == 20);
    for (std::size_t i = 0; i < 20; ++i) CHECK(flags[i] == (i >= 10 && i <= 14));

    // clamped at the end of the sequence
    SpikeEvent late;
    late.frame = 18;
    const std::vector<bool> tail = reveal_decision({late}, 20, 4);
    CHECK(tail[17] == false);
    CHECK(tail[18] == true);
    CHECK(tail[19] == true);

    SpikeEvent out_of_range;
    out_of_range.frame = 20;
    CHECK_THROWS_AS(reveal_decision({out_of_range}, 20, 4), ParamError);
}

TEST_CASE("the stopword list is the standard english set") {
    const auto& english = english_stopwords();
    CHECK(english.size() == 179);
    CHECK(english.count("the") == 1);
    CHECK(english.count("a") == 1);
    CHECK(english.count("of") == 1);
    CHECK(english.count("crossing") == 0);
    CHECK(english.count("photo") == 0);

    const auto& extended = explanation_stopwords();
    CHECK(extended.size() == 180);
    CHECK(extended.count("photo") == 1);
}

TEST_CASE("content words drop stopwords, case, and punctuation") {
    const auto words =
        content_words("A photo of Pedestrians, crossing; the pedestrians slowly!",
                      explanation_stopwords());
    REQUIRE(words.size() == 3);
    CHECK(words[0] == "pedestrians");
    CHECK(words[1] == "crossing");
    CHECK(words[2] == "slowly");
    CHECK(content_words("the of a", explanation_stopwords()).empty());
}

TEST_CASE("overlap matching follows shared content words") {
    const auto& stops = explanation_stopwords();
    const std::string truth = "Wait at intersection, peds on sidewalk, bicycle crossing";

    SUBCASE("a shared word anywhere counts as a hit") {
        const OverlapResult r =
            content_word_overlap({"a photo of a junction", "a photo of pedestrians crossing"},
                                 truth, stops);
        CHECK(r.hit);
        CHECK_FALSE(r.top1_hit);  // the first prediction shares nothing
        REQUIRE(r.matched.size() == 1);
        CHECK(r.matched[0] == "crossing");
    }

    SUBCASE("top1 hit requires the first prediction to match") {
        const OverlapResult r =
            content_word_overlap({"a photo of a bicycle", "a photo of a tunnel"}, truth, stops);
        CHECK(r.hit);
        CHECK(r.top1_hit);
    }

    SUBCASE("stopword-only overlap is no hit") {
        const OverlapResult r =
            content_word_overlap({"a photo of the car"}, "the road ahead", stops);
        CHECK_FALSE(r.hit);
        CHECK(r.matched.empty());
    }

    SUBCASE("identical texts share every content word, sorted") {
        const OverlapResult r = content_word_overlap({truth}, truth, stops);
        CHECK(r.hit);
        CHECK(r.top1_hit);
        REQUIRE(r.matched.size() == 6);
        CHECK(std::is_sorted(r.matched.begin(), r.matched.end()));
    }

    CHECK_THROWS_AS(content_word_overlap({"x"}, "", stops), ValidationError);
}

TEST_CASE("noiseless synthetic scenes explain themselves perfectly") {
    SyntheticSpec spec;
    spec.n_sequences = 12;
    spec.frames = 10;
    spec.embedding_width = 32;
    spec.n_concepts = 14;
    spec.seed = 19;
    spec.noise_std = 0.0;
    const SyntheticDataset ds = generate_synthetic(spec);

    const ExplainRates top1 = scene_explain_rate(ds.sequences, ds.concepts, ExplainMode::top1);
    const ExplainRates top3 = scene_explain_rate(ds.sequences, ds.concepts, ExplainMode::top3);
    CHECK(top3.scene_rate == 1.0);
    CHECK(top3.frame_rate == 1.0);
    CHECK(top1.scene_rate == 1.0);
    CHECK(top3.scene_rate >= top1.scene_rate);
    CHECK(top3.frame_rate >= top1.frame_rate);
    CHECK(top1.n_scenes == 12);
    CHECK(top1.n_frames == 120);
    CHECK(top1.n_skipped == 0);
}

TEST_CASE("sequences without descriptions are skipped and counted") {
    SyntheticSpec spec;
    spec.n_sequences = 6;
    spec.frames = 8;
    spec.n_concepts = 10;
    spec.seed = 23;
    spec.noise_std = 0.0;
    SyntheticDataset ds = generate_synthetic(spec);
    ds.sequences[2].scene_description.clear();
    ds.sequences[4].scene_description.clear();

    const ExplainRates r = scene_explain_rate(ds.sequences, ds.concepts, ExplainMode::top3);
    CHECK(r.n_scenes == 4);
    CHECK(r.n_frames == 32);
    CHECK(r.n_skipped == 2);
    CHECK(r.scene_rate == 1.0);
}

TEST_CASE("full explanation reports aggregate all the pieces") {
    SyntheticSpec spec;
    spec.n_sequences = 1;
    spec.frames = 24;
    spec.embedding_width = 32;
    spec.n_concepts = 8;
    spec.seed = 29;
    spec.noise_std = 0.0;
    const SyntheticDataset ds = generate_synthetic(spec);
    ModelConfig config;
    config.input_dim = 11;
    config.model_dim = 8;
    config.n_layers = 1;
    config.n_heads = 2;
    config.window = 4;
    config.ffn_dim = 12;
    config.dropout_rate = 0.0;
    config.max_seq_len = 24;
    const ModelParams params = init_params(config, 7);

    const ExplanationReport report =
        explain_sequence(ds.sequences[0], ds.concepts, params, config, 10, 3);
    CHECK(report.sequence_id == ds.sequences[0].id);
    CHECK(report.frame_top.size() == 24);
    CHECK(report.windows.size() == 3);
    CHECK(report.attention.size() == 24);
    CHECK(report.reveal.size() == 24);
    CHECK(&enclosing_window(report, 0) == &report.windows[0]);
    CHECK(&enclosing_window(report, 19) == &report.windows[1]);
    CHECK(&enclosing_window(report, 23) == &report.windows[2]);
    CHECK_THROWS_AS(enclosing_window(report, 24), ParamError);

    // the json payload parses and mirrors the report's shape
    const auto parsed = nlohmann::json::parse(explanation_json(report, ds.concepts));
    CHECK(parsed.at("sequence_id") == report.sequence_id);
    CHECK(parsed.at("frames").size() == 24);
    CHECK(parsed.at("windows").size() == 3);
    CHECK(parsed.at("spikes").size() == report.spikes.size());
    CHECK(parsed.at("k_per_frame") == 3);

    // the csv has a header plus one line per frame
    const std::string csv = explanation_csv(report, ds.concepts);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 25);
    CHECK(csv.rfind("frame,attention,reveal,top1_concept\n", 0) == 0);
    // concept texts ride in quotes so commas stay safe
    CHECK(csv.find("\"") != std::string::npos);
}
