#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "conceptdrive/tensor.hpp"

namespace conceptdrive {

enum class SourceTag { human, generated, mixed };

std::string to_string(SourceTag tag);
SourceTag source_tag_from_string(const std::string& s);

/// Scenario texts paired with unit-norm embedding rows; immutable after
/// construction. The embedding rows are the bottleneck vocabulary every
/// frame is scored against.
class ConceptSet {
public:
    ConceptSet() = default;
    /// Validates text/row pairing and canonical uniqueness. With
    /// normalize=true each row is scaled to unit Euclidean norm (a zero-norm
    /// row is a ValidationError); with normalize=false rows must already be
    /// unit within 1e-6.
    ConceptSet(std::vector<std::string> texts, Tensor embeddings, SourceTag tag,
               bool normalize = true);

    std::size_t size() const { return texts_.size(); }
    std::size_t width() const { return embeddings_.cols(); }
    const std::vector<std::string>& texts() const { return texts_; }
    /// Bounds-checked single text.
    const std::string& text(std::size_t i) const;
    const Tensor& embeddings() const { return embeddings_; }
    SourceTag source_tag() const { return tag_; }

private:
    std::vector<std::string> texts_;
    Tensor embeddings_;
    SourceTag tag_ = SourceTag::mixed;
};

/// Lowercase + strip + collapse internal whitespace; the text-identity key
/// used for duplicate detection.
std::string canonicalize(const std::string& text);

/// Strip + collapse internal whitespace, case preserved.
std::string normalize_whitespace(const std::string& text);

/// Prefix with "a photo of " unless already so prefixed (case-insensitive).
/// Whitespace is normalized first; empty input is a ValidationError.
std::string apply_template(const std::string& raw);

/// Drop texts whose canonical form already appeared; order otherwise kept.
std::vector<std::string> dedup_concepts(const std::vector<std::string>& texts);

/// Cosine similarity of every frame row against every concept row: entry
/// (t, j) = dot(x_t, s_j) / (|x_t| * |s_j|). Result is T x k. A zero-norm
/// frame row is a ValidationError naming the frame index.
Tensor concept_scores(const Tensor& frame_embeddings, const ConceptSet& set);

struct ScoredConcept {
    std::size_t index;
    double score;
};

/// Top k_top entries of one score row, descending by score, ties broken by
/// ascending concept index. Row must exist; 1 <= k_top <= row width.
std::vector<ScoredConcept> top_k_concepts(const Tensor& scores, std::size_t row,
                                          std::size_t k_top);

/// Uniform sample of `size` concepts without replacement, deterministic per
/// seed. size == set.size() returns a verbatim copy; the sampled subset
/// keeps ascending original order, texts and rows stay paired.
ConceptSet subset_concepts(const ConceptSet& set, std::size_t size, std::uint64_t seed);

// ---- text + embedding files ----

/// One scenario per line, UTF-8. Blank lines are skipped.
std::vector<std::string> read_concept_texts(const std::string& path);
void write_concept_texts(const std::vector<std::string>& texts, const std::string& path);

/// Embedding matrix file: magic "CGEM", version u32=1, k u32, l u32, then
/// k*l little-endian f32 row-major. Reader upcasts to f64 (no
/// normalization here; see load_concept_set).
Tensor read_cgem(const std::string& path);
void write_cgem(const Tensor& embeddings, const std::string& path);

/// Texts + embeddings -> normalized ConceptSet. Row/text count mismatch is
/// a ValidationError.
ConceptSet load_concept_set(const std::string& texts_path, const std::string& emb_path,
                            SourceTag tag = SourceTag::mixed);

}  // namespace conceptdrive
