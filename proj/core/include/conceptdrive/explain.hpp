#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "conceptdrive/concepts.hpp"
#include "conceptdrive/data.hpp"
#include "conceptdrive/model.hpp"

namespace conceptdrive {

/// Per-frame shortlist: top_k_concepts for every row of a score matrix.
/// k_top is clamped to the concept count.
std::vector<std::vector<ScoredConcept>> per_frame_top_k(const Tensor& scores,
                                                        std::size_t k_top);

struct ConceptFraction {
    std::size_t index = 0;  // concept index in the set
    std::size_t count = 0;  // appearances in per-frame top-k lists
    double fraction = 0.0;  // count / frames in window
};

struct AggregateWindow {
    std::size_t first_frame = 0;
    std::size_t n_frames = 0;             // ragged for the last window
    std::vector<std::size_t> counts;      // per concept, length k
    std::vector<ConceptFraction> top;     // up to 3 entries, count > 0 only
};

/// Windowed occurrence aggregation: frames are cut into consecutive windows
/// of window_frames (last one ragged), each frame contributes its top
/// k_per_frame concepts, and each window reports the three most frequent.
/// Fractions use the window's actual frame count, so they sum to k_per_frame
/// over all concepts in every window. Ties break toward the lower index.
std::vector<AggregateWindow> aggregate_top_concepts(const Tensor& scores,
                                                    std::size_t window_frames = 20,
                                                    std::size_t k_per_frame = 10);

/// Final-layer head-mean CLS->frame attention in frame order.
std::vector<double> attention_series(const AttentionTrace& trace);

enum class SpikeDirection { rise, drop };
std::string to_string(SpikeDirection d);

struct SpikeEvent {
    std::size_t frame = 0;  // frame whose arrival caused the jump
    SpikeDirection direction = SpikeDirection::rise;
    double z = 0.0;
    double delta = 0.0;  // raw first difference
};

/// Robust z-scores of the series' first differences (median / MAD with a
/// relative floor): |z| >= z_threshold flags an event at frame i+1, sign
/// gives the direction, and events closer than min_gap frames merge keeping
/// the larger |z|. A series with identical differences has no events. The
/// result is invariant under a*x + b (a > 0) up to roundoff.
std::vector<SpikeEvent> detect_spikes(const std::vector<double>& series,
                                      double z_threshold = 2.5, std::size_t min_gap = 4);

/// Reveal flags: true on each event frame and the hold_off frames after it
/// (clamped to the sequence). Flags never precede their event.
std::vector<bool> reveal_decision(const std::vector<SpikeEvent>& events,
                                  std::size_t n_frames, std::size_t hold_off = 4);

struct OverlapResult {
    bool hit = false;       // any predicted text shares a content word
    bool top1_hit = false;  // first predicted text alone
    std::vector<std::string> matched;  // shared content words, sorted unique
};

/// Lowercase alphanumeric tokens of `text` minus `stopwords`, in first-seen
/// order without duplicates.
std::vector<std::string> content_words(const std::string& text,
                                       const std::unordered_set<std::string>& stopwords);

/// Content-word intersection between predicted concept texts and a
/// ground-truth description. Empty ground truth is a ValidationError.
OverlapResult content_word_overlap(const std::vector<std::string>& predicted,
                                   const std::string& ground_truth,
                                   const std::unordered_set<std::string>& stopwords);

enum class ExplainMode { top1, top3 };
std::string to_string(ExplainMode m);

struct ExplainRates {
    double scene_rate = 0.0;  // whole-sequence aggregated concepts vs description
    double frame_rate = 0.0;  // per-frame top concepts vs description
    std::size_t n_scenes = 0;
    std::size_t n_frames = 0;
    std::size_t n_skipped = 0;  // sequences without a description
};

/// Fraction of scenes (and frames) whose top concept texts share a content
/// word with the scene description. Concept ranking is score-only, so no
/// model parameters enter. Sequences without descriptions are skipped and
/// counted.
ExplainRates scene_explain_rate(const std::vector<DriveSequence>& data,
                                const ConceptSet& set, ExplainMode mode);

// ---- full per-sequence report ----

struct ExplanationReport {
    std::string sequence_id;
    std::size_t window_frames = 20;
    std::size_t k_per_frame = 10;
    std::vector<std::vector<ScoredConcept>> frame_top;  // per frame
    std::vector<AggregateWindow> windows;
    std::vector<double> attention;  // length T
    std::vector<SpikeEvent> spikes;
    std::vector<bool> reveal;
};

const AggregateWindow& enclosing_window(const ExplanationReport& report,
                                        std::size_t frame);

/// Runs inference for the attention trace, scores concepts, aggregates,
/// detects spikes (skipped for sequences shorter than 8 frames), and fills
/// reveal flags.
ExplanationReport explain_sequence(const DriveSequence& seq, const ConceptSet& set,
                                   const ModelParams& params, const ModelConfig& config,
                                   std::size_t window_frames = 20,
                                   std::size_t k_per_frame = 10,
                                   double z_threshold = 2.5, std::size_t min_gap = 4);

/// Stable-key JSON of the full report; reveal frames carry the enclosing
/// window's top concepts.
std::string explanation_json(const ExplanationReport& report, const ConceptSet& set);

/// Flat plotting CSV: frame, attention, reveal, top1_concept.
std::string explanation_csv(const ExplanationReport& report, const ConceptSet& set);

}  // namespace conceptdrive
