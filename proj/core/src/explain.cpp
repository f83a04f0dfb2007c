#include "conceptdrive/explain.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <unordered_set>

#include "conceptdrive/errors.hpp"
#include "conceptdrive/stopwords.hpp"
#include "fmt_util.hpp"
#include "json.hpp"

namespace conceptdrive {

namespace {

double median_of(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const std::size_t mid = xs.size() / 2;
    return xs.size() % 2 ? xs[mid] : 0.5 * (xs[mid - 1] + xs[mid]);
}

}  // namespace

std::vector<std::vector<ScoredConcept>> per_frame_top_k(const Tensor& scores,
                                                        std::size_t k_top) {
    if (k_top < 1) throw ParamError("k_top must be >= 1");
    const std::size_t k = std::min(k_top, scores.cols());
    std::vector<std::vector<ScoredConcept>> out;
    out.reserve(scores.rows());
    for (std::size_t t = 0; t < scores.rows(); ++t)
        out.push_back(top_k_concepts(scores, t, k));
    return out;
}

std::vector<AggregateWindow> aggregate_top_concepts(const Tensor& scores,
                                                    std::size_t window_frames,
                                                    std::size_t k_per_frame) {
    if (window_frames < 1) throw ParamError("window_frames must be >= 1");
    if (k_per_frame < 1) throw ParamError("k_per_frame must be >= 1");
    if (scores.rows() == 0 || scores.cols() == 0)
        throw ParamError("aggregation needs a nonempty score matrix");

    const auto frame_top = per_frame_top_k(scores, k_per_frame);
    const std::size_t n_concepts = scores.cols();

    std::vector<AggregateWindow> windows;
    for (std::size_t start = 0; start < scores.rows(); start += window_frames) {
        AggregateWindow w;
        w.first_frame = start;
        w.n_frames = std::min(window_frames, scores.rows() - start);
        w.counts.assign(n_concepts, 0);
        for (std::size_t t = start; t < start + w.n_frames; ++t)
            for (const ScoredConcept& sc : frame_top[t]) w.counts[sc.index] += 1;

        std::vector<std::size_t> order(n_concepts);
        for (std::size_t i = 0; i < n_concepts; ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (w.counts[a] != w.counts[b]) return w.counts[a] > w.counts[b];
            return a < b;
        });
        for (std::size_t i = 0; i < order.size() && w.top.size() < 3; ++i) {
            const std::size_t idx = order[i];
            if (w.counts[idx] == 0) break;
            w.top.push_back({idx, w.counts[idx],
                             static_cast<double>(w.counts[idx]) /
                                 static_cast<double>(w.n_frames)});
        }
        windows.push_back(std::move(w));
    }
    return windows;
}

std::vector<double> attention_series(const AttentionTrace& trace) {
    return trace.final_cls_series();
}

std::string to_string(SpikeDirection d) {
    return d == SpikeDirection::rise ? "rise" : "drop";
}

std::vector<SpikeEvent> detect_spikes(const std::vector<double>& series,
                                      double z_threshold, std::size_t min_gap) {
    if (series.size() < 8)
        throw ParamError("spike detection needs at least 8 samples, got " +
                         std::to_string(series.size()));
    if (!(z_threshold > 0.0)) throw ParamError("z_threshold must be positive");

    std::vector<double> diffs(series.size() - 1);
    for (std::size_t i = 0; i + 1 < series.size(); ++i) diffs[i] = series[i + 1] - series[i];

    const double med = median_of(diffs);
    std::vector<double> devs(diffs.size());
    double max_dev = 0.0;
    for (std::size_t i = 0; i < diffs.size(); ++i) {
        devs[i] = std::abs(diffs[i] - med);
        max_dev = std::max(max_dev, devs[i]);
    }
    if (max_dev == 0.0) return {};  // every step identical: nothing stands out
    const double mad = median_of(devs);
    // the relative floor keeps z finite when over half the steps are
    // identical, without breaking scale invariance
    const double scale = std::max(1.4826 * mad, 1e-12 * max_dev);

    std::vector<SpikeEvent> events;
    for (std::size_t i = 0; i < diffs.size(); ++i) {
        const double z = (diffs[i] - med) / scale;
        if (std::abs(z) < z_threshold) continue;
        SpikeEvent e;
        e.frame = i + 1;
        e.direction = z > 0.0 ? SpikeDirection::rise : SpikeDirection::drop;
        e.z = z;
        e.delta = diffs[i];
        if (!events.empty() && e.frame - events.back().frame < min_gap) {
            if (std::abs(e.z) > std::abs(events.back().z)) events.back() = e;
            continue;
        }
        events.push_back(e);
    }
    return events;
}

std::vector<bool> reveal_decision(const std::vector<SpikeEvent>& events,
                                  std::size_t n_frames, std::size_t hold_off) {
    std::vector<bool> reveal(n_frames, false);
    for (const SpikeEvent& e : events) {
        if (e.frame >= n_frames)
            throw ParamError("spike frame " + std::to_string(e.frame) +
                             " outside the sequence");
        const std::size_t stop = std::min(n_frames - 1, e.frame + hold_off);
        for (std::size_t f = e.frame; f <= stop; ++f) reveal[f] = true;
    }
    return reveal;
}

std::vector<std::string> content_words(const std::string& text,
                                       const std::unordered_set<std::string>& stopwords) {
    std::vector<std::string> words;
    std::unordered_set<std::string> seen;
    std::string current;
    auto flush = [&] {
        if (!current.empty() && !stopwords.count(current) && seen.insert(current).second)
            words.push_back(current);
        current.clear();
    };
    for (unsigned char ch : text) {
        if (std::isalnum(ch))
            current.push_back(static_cast<char>(std::tolower(ch)));
        else
            flush();
    }
    flush();
    return words;
}

OverlapResult content_word_overlap(const std::vector<std::string>& predicted,
                                   const std::string& ground_truth,
                                   const std::unordered_set<std::string>& stopwords) {
    if (ground_truth.empty()) throw ValidationError("ground-truth description is empty");
    const auto truth_words = content_words(ground_truth, stopwords);
    const std::unordered_set<std::string> truth_set(truth_words.begin(), truth_words.end());

    OverlapResult result;
    std::unordered_set<std::string> matched;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        bool any = false;
        for (const std::string& w : content_words(predicted[i], stopwords)) {
            if (truth_set.count(w)) {
                matched.insert(w);
                any = true;
            }
        }
        if (any) {
            result.hit = true;
            if (i == 0) result.top1_hit = true;
        }
    }
    result.matched.assign(matched.begin(), matched.end());
    std::sort(result.matched.begin(), result.matched.end());
    return result;
}

std::string to_string(ExplainMode m) { return m == ExplainMode::top1 ? "top1" : "top3"; }

ExplainRates scene_explain_rate(const std::vector<DriveSequence>& data,
                                const ConceptSet& set, ExplainMode mode) {
    const auto& stop = explanation_stopwords();
    const std::size_t take = mode == ExplainMode::top1 ? 1 : 3;

    ExplainRates rates;
    std::size_t scene_hits = 0, frame_hits = 0;
    for (const DriveSequence& seq : data) {
        if (seq.scene_description.empty()) {
            ++rates.n_skipped;
            continue;
        }
        const Tensor scores = concept_scores(seq.frame_embeddings, set);

        // scene granularity: rank concepts by mean score over the whole
        // sequence, match the leaders against the description
        Tensor scene_mean(1, set.size(), 0.0);
        for (std::size_t t = 0; t < scores.rows(); ++t)
            for (std::size_t j = 0; j < scores.cols(); ++j)
                scene_mean.at(0, j) += scores.at(t, j);
        for (std::size_t j = 0; j < set.size(); ++j)
            scene_mean.at(0, j) /= static_cast<double>(scores.rows());
        std::vector<std::string> scene_texts;
        for (const ScoredConcept& sc :
             top_k_concepts(scene_mean, 0, std::min<std::size_t>(take, set.size())))
            scene_texts.push_back(set.text(sc.index));
        if (content_word_overlap(scene_texts, seq.scene_description, stop).hit) ++scene_hits;
        ++rates.n_scenes;

        // frame granularity: each frame's own top concepts
        const auto frame_top =
            per_frame_top_k(scores, std::min<std::size_t>(take, set.size()));
        for (const auto& top : frame_top) {
            std::vector<std::string> texts;
            for (const ScoredConcept& sc : top) texts.push_back(set.text(sc.index));
            if (content_word_overlap(texts, seq.scene_description, stop).hit) ++frame_hits;
            ++rates.n_frames;
        }
    }
    if (rates.n_scenes)
        rates.scene_rate = static_cast<double>(scene_hits) / static_cast<double>(rates.n_scenes);
    if (rates.n_frames)
        rates.frame_rate = static_cast<double>(frame_hits) / static_cast<double>(rates.n_frames);
    return rates;
}

const AggregateWindow& enclosing_window(const ExplanationReport& report,
                                        std::size_t frame) {
    if (frame >= report.frame_top.size())
        throw ParamError("frame " + std::to_string(frame) + " beyond the report");
    const std::size_t idx = frame / report.window_frames;
    if (idx >= report.windows.size())
        throw ParamError("frame " + std::to_string(frame) + " beyond the report");
    return report.windows[idx];
}

ExplanationReport explain_sequence(const DriveSequence& seq, const ConceptSet& set,
                                   const ModelParams& params, const ModelConfig& config,
                                   std::size_t window_frames, std::size_t k_per_frame,
                                   double z_threshold, std::size_t min_gap) {
    ExplanationReport report;
    report.sequence_id = seq.id;
    report.window_frames = window_frames;
    report.k_per_frame = k_per_frame;

    const ForwardResult run = forward(seq, set, params, config);
    report.attention = run.trace.final_cls_series();

    const Tensor scores = concept_scores(seq.frame_embeddings, set);
    report.frame_top = per_frame_top_k(scores, k_per_frame);
    report.windows = aggregate_top_concepts(scores, window_frames, k_per_frame);
    if (report.attention.size() >= 8)
        report.spikes = detect_spikes(report.attention, z_threshold, min_gap);
    report.reveal = reveal_decision(report.spikes, report.attention.size());
    return report;
}

std::string explanation_json(const ExplanationReport& report, const ConceptSet& set) {
    using nlohmann::json;
    json j;
    j["sequence_id"] = report.sequence_id;
    j["window_frames"] = report.window_frames;
    j["k_per_frame"] = report.k_per_frame;

    json frames = json::array();
    for (std::size_t t = 0; t < report.frame_top.size(); ++t) {
        json f;
        f["frame"] = t;
        f["attention"] = report.attention[t];
        f["reveal"] = static_cast<bool>(report.reveal[t]);
        json top = json::array();
        for (const ScoredConcept& sc : report.frame_top[t])
            top.push_back({{"concept", set.text(sc.index)}, {"score", sc.score}});
        f["top_concepts"] = top;
        if (report.reveal[t]) {
            json payload = json::array();
            for (const ConceptFraction& cf : enclosing_window(report, t).top)
                payload.push_back(
                    {{"concept", set.text(cf.index)}, {"fraction", cf.fraction}});
            f["reveal_concepts"] = payload;
        }
        frames.push_back(f);
    }
    j["frames"] = frames;

    json windows = json::array();
    for (const AggregateWindow& w : report.windows) {
        json top = json::array();
        for (const ConceptFraction& cf : w.top)
            top.push_back({{"concept", set.text(cf.index)},
                           {"count", cf.count},
                           {"fraction", cf.fraction}});
        windows.push_back({{"first_frame", w.first_frame},
                           {"n_frames", w.n_frames},
                           {"top_concepts", top}});
    }
    j["windows"] = windows;

    json spikes = json::array();
    for (const SpikeEvent& e : report.spikes)
        spikes.push_back({{"frame", e.frame},
                          {"direction", to_string(e.direction)},
                          {"z", e.z},
                          {"delta", e.delta}});
    j["spikes"] = spikes;
    return j.dump(2) + "\n";
}

std::string explanation_csv(const ExplanationReport& report, const ConceptSet& set) {
    std::string out = "frame,attention,reveal,top1_concept\n";
    for (std::size_t t = 0; t < report.frame_top.size(); ++t) {
        out += std::to_string(t);
        out += ',';
        out += detail::fmt_double(report.attention[t]);
        out += ',';
        out += report.reveal[t] ? '1' : '0';
        out += ',';
        std::string text =
            report.frame_top[t].empty() ? "" : set.text(report.frame_top[t][0].index);
        std::string quoted = "\"";
        for (char c : text) {
            quoted += c;
            if (c == '"') quoted += '"';
        }
        quoted += '"';
        out += quoted;
        out += '\n';
    }
    return out;
}

}  // namespace conceptdrive
