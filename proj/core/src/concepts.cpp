#include "conceptdrive/concepts.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_set>
#include <utility>

#include "binio.hpp"
#include "conceptdrive/rng.hpp"

namespace conceptdrive {

std::string to_string(SourceTag tag) {
    switch (tag) {
        case SourceTag::human: return "human";
        case SourceTag::generated: return "generated";
        case SourceTag::mixed: return "mixed";
    }
    return "mixed";
}

SourceTag source_tag_from_string(const std::string& s) {
    if (s == "human") return SourceTag::human;
    if (s == "generated") return SourceTag::generated;
    if (s == "mixed") return SourceTag::mixed;
    throw ParamError("unknown source tag \"" + s + "\"");
}

std::string normalize_whitespace(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending_space = !out.empty();
        } else {
            if (pending_space) out.push_back(' ');
            pending_space = false;
            out.push_back(c);
        }
    }
    return out;
}

std::string canonicalize(const std::string& text) {
    std::string out = normalize_whitespace(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string apply_template(const std::string& raw) {
    const std::string text = normalize_whitespace(raw);
    if (text.empty()) throw ValidationError("cannot template an empty scenario text");
    static const std::string prefix = "a photo of ";
    if (text.size() >= prefix.size()) {
        std::string head = text.substr(0, prefix.size());
        std::transform(head.begin(), head.end(), head.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (head == prefix) return text;
    }
    return prefix + text;
}

std::vector<std::string> dedup_concepts(const std::vector<std::string>& texts) {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    out.reserve(texts.size());
    for (const std::string& t : texts)
        if (seen.insert(canonicalize(t)).second) out.push_back(t);
    return out;
}

ConceptSet::ConceptSet(std::vector<std::string> texts, Tensor embeddings, SourceTag tag,
                       bool normalize)
    : texts_(std::move(texts)), embeddings_(std::move(embeddings)), tag_(tag) {
    if (texts_.size() != embeddings_.rows())
        throw ValidationError("concept set has " + std::to_string(texts_.size()) +
                              " texts but " + std::to_string(embeddings_.rows()) +
                              " embedding rows");
    if (texts_.empty()) throw ValidationError("concept set is empty");

    std::unordered_set<std::string> seen;
    for (const std::string& t : texts_)
        if (!seen.insert(canonicalize(t)).second)
            throw ValidationError("duplicate concept text after canonicalization: \"" + t + "\"");

    const std::size_t l = embeddings_.cols();
    for (std::size_t i = 0; i < embeddings_.rows(); ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < l; ++j) sq += embeddings_.at(i, j) * embeddings_.at(i, j);
        const double norm = std::sqrt(sq);
        if (normalize) {
            if (norm == 0.0)
                throw ValidationError("concept embedding row " + std::to_string(i) +
                                      " has zero norm");
            for (std::size_t j = 0; j < l; ++j) embeddings_.at(i, j) /= norm;
        } else if (std::fabs(norm - 1.0) > 1e-6) {
            throw ValidationError("concept embedding row " + std::to_string(i) +
                                  " has norm " + std::to_string(norm) + ", expected unit");
        }
        if (!embeddings_.all_finite())
            throw ValidationError("concept embedding row " + std::to_string(i) +
                                  " contains non-finite values");
    }
}

const std::string& ConceptSet::text(std::size_t i) const {
    if (i >= texts_.size())
        throw ParamError("concept index " + std::to_string(i) + " out of range");
    return texts_[i];
}

Tensor concept_scores(const Tensor& frame_embeddings, const ConceptSet& set) {
    const std::size_t T = frame_embeddings.rows();
    const std::size_t l = frame_embeddings.cols();
    if (l != set.width())
        throw ShapeError("frame embedding width " + std::to_string(l) +
                         " does not match concept width " + std::to_string(set.width()));
    const std::size_t k = set.size();
    const Tensor& s = set.embeddings();

    // concept-row norms are ~1 after load; keep them in the formula so the
    // reported value is the raw cosine
    std::vector<double> snorm(k);
    for (std::size_t j = 0; j < k; ++j) {
        double sq = 0.0;
        for (std::size_t c = 0; c < l; ++c) sq += s.at(j, c) * s.at(j, c);
        snorm[j] = std::sqrt(sq);
    }

    Tensor out(T, k);
    for (std::size_t t = 0; t < T; ++t) {
        double xsq = 0.0;
        for (std::size_t c = 0; c < l; ++c) xsq += frame_embeddings.at(t, c) * frame_embeddings.at(t, c);
        const double xnorm = std::sqrt(xsq);
        if (xnorm == 0.0)
            throw ValidationError("frame " + std::to_string(t) +
                                  " has a zero-norm embedding, cosine undefined");
        for (std::size_t j = 0; j < k; ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < l; ++c)
                dot += frame_embeddings.at(t, c) * s.at(j, c);
            out.at(t, j) = dot / (xnorm * snorm[j]);
        }
    }
    return out;
}

std::vector<ScoredConcept> top_k_concepts(const Tensor& scores, std::size_t row,
                                          std::size_t k_top) {
    if (row >= scores.rows()) throw ParamError("top_k_concepts: row index out of range");
    const std::size_t k = scores.cols();
    if (k_top < 1 || k_top > k)
        throw ParamError("top_k_concepts: k_top " + std::to_string(k_top) +
                         " outside [1, " + std::to_string(k) + "]");
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double sa = scores.at(row, a), sb = scores.at(row, b);
        if (sa != sb) return sa > sb;
        return a < b;
    });
    std::vector<ScoredConcept> out;
    out.reserve(k_top);
    for (std::size_t i = 0; i < k_top; ++i) out.push_back({order[i], scores.at(row, order[i])});
    return out;
}

ConceptSet subset_concepts(const ConceptSet& set, std::size_t size, std::uint64_t seed) {
    const std::size_t k = set.size();
    if (size < 1 || size > k)
        throw ParamError("subset size " + std::to_string(size) + " outside [1, " +
                         std::to_string(k) + "]");
    std::vector<std::size_t> indices(k);
    std::iota(indices.begin(), indices.end(), 0);
    if (size < k) {
        // partial Fisher-Yates, then ascending order so rows keep their
        // relative arrangement
        SplitMix64 rng(derive_seed(seed, "concept-subset"));
        for (std::size_t i = 0; i < size; ++i) {
            const std::size_t j = i + rng.next_below(k - i);
            std::swap(indices[i], indices[j]);
        }
        indices.resize(size);
        std::sort(indices.begin(), indices.end());
    }
    std::vector<std::string> texts;
    texts.reserve(size);
    Tensor rows(size, set.width());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        texts.push_back(set.texts()[indices[i]]);
        for (std::size_t j = 0; j < set.width(); ++j)
            rows.at(i, j) = set.embeddings().at(indices[i], j);
    }
    // rows are verbatim copies of already-unit rows; do not renormalize,
    // a full-size draw must be bit-identical to the source set
    return ConceptSet(std::move(texts), std::move(rows), set.source_tag(), /*normalize=*/false);
}

std::vector<std::string> read_concept_texts(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path, 0);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!normalize_whitespace(line).empty()) out.push_back(line);
    }
    return out;
}

void write_concept_texts(const std::vector<std::string>& texts, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open " + path + " for writing", 0);
    for (const std::string& t : texts) out << t << '\n';
    if (!out) throw FormatError("write to " + path + " failed", 0);
}

Tensor read_cgem(const std::string& path) {
    detail::ByteReader r(path);
    r.magic("CGEM");
    const std::uint64_t ver_at = r.offset();
    const std::uint32_t version = r.u32("version");
    if (version != 1)
        throw FormatError(path + ": unsupported version " + std::to_string(version), ver_at);
    const std::uint32_t k = r.u32("concept count");
    const std::uint32_t l = r.u32("embedding width");
    if (k == 0 || l == 0)
        throw FormatError(path + ": empty embedding matrix " + std::to_string(k) + "x" +
                              std::to_string(l),
                          8);
    Tensor out(k, l);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<double>(r.f32("embedding value"));
    if (!r.at_end())
        throw FormatError(path + ": trailing bytes after embedding data", r.offset());
    return out;
}

void write_cgem(const Tensor& embeddings, const std::string& path) {
    if (embeddings.rows() == 0 || embeddings.cols() == 0)
        throw ParamError("refusing to write an empty embedding matrix");
    detail::ByteWriter w(path);
    w.magic("CGEM");
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(embeddings.rows()));
    w.u32(static_cast<std::uint32_t>(embeddings.cols()));
    for (std::size_t i = 0; i < embeddings.size(); ++i)
        w.f32(static_cast<float>(embeddings[i]));
    w.close();
}

ConceptSet load_concept_set(const std::string& texts_path, const std::string& emb_path,
                            SourceTag tag) {
    std::vector<std::string> texts = read_concept_texts(texts_path);
    Tensor emb = read_cgem(emb_path);
    if (texts.size() != emb.rows())
        throw ValidationError(texts_path + " lists " + std::to_string(texts.size()) +
                              " concepts but " + emb_path + " holds " +
                              std::to_string(emb.rows()) + " rows");
    return ConceptSet(std::move(texts), std::move(emb), tag, /*normalize=*/true);
}

}  // namespace conceptdrive
