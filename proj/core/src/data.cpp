#include "conceptdrive/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <utility>

#include "binio.hpp"
#include "conceptdrive/rng.hpp"
#include "json.hpp"

namespace conceptdrive {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(SequenceProfile p) {
    switch (p) {
        case SequenceProfile::custom: return "custom";
        case SequenceProfile::comma: return "comma";
        case SequenceProfile::nuscenes: return "nuscenes";
    }
    return "custom";
}

SequenceProfile profile_from_string(const std::string& s) {
    if (s == "custom") return SequenceProfile::custom;
    if (s == "comma") return SequenceProfile::comma;
    if (s == "nuscenes") return SequenceProfile::nuscenes;
    throw ParamError("unknown sequence profile \"" + s + "\"");
}

void validate_sequence(const DriveSequence& seq) {
    const std::size_t T = seq.sensors.rows();
    if (T < 2) throw ValidationError("sequence " + seq.id + ": T must be >= 2");
    if (seq.sensors.cols() != 3)
        throw ValidationError("sequence " + seq.id + ": sensors must have 3 columns (v, a, d)");
    if (seq.frame_embeddings.rows() != T)
        throw ValidationError("sequence " + seq.id +
                              ": frame_embeddings row count does not match sensor rows");
    if (seq.frame_embeddings.cols() == 0)
        throw ValidationError("sequence " + seq.id + ": frame_embeddings has zero width");
    if (!seq.frame_embeddings.all_finite())
        throw ValidationError("sequence " + seq.id + ": frame_embeddings contains NaN/Inf");

    static const char* channel_name[3] = {"v", "a", "d"};
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t c = 0; c < 3; ++c)
            if (!std::isfinite(seq.sensors.at(t, c)))
                throw ValidationError("sequence " + seq.id + ": " + channel_name[c] +
                                      " is not finite at frame " + std::to_string(t));
    for (std::size_t t = 0; t < T; ++t) {
        if (seq.sensors.at(t, kSensorSpeed) < 0.0)
            throw ValidationError("sequence " + seq.id + ": v < 0 at frame " + std::to_string(t));
        if (seq.sensors.at(t, kSensorDistance) < 0.0)
            throw ValidationError("sequence " + seq.id + ": d < 0 at frame " + std::to_string(t));
    }
    if (!std::isfinite(seq.target_angle))
        throw ValidationError("sequence " + seq.id + ": target_angle is not finite");
    if (!std::isfinite(seq.target_distance))
        throw ValidationError("sequence " + seq.id + ": target_distance is not finite");
    if (seq.target_distance < 0.0)
        throw ValidationError("sequence " + seq.id + ": target_distance (d) < 0");
    if (!(seq.fps > 0.0f))
        throw ValidationError("sequence " + seq.id + ": fps must be positive");

    if (seq.profile == SequenceProfile::comma && (T != 240 || seq.fps != 4.0f))
        throw ValidationError("sequence " + seq.id +
                              ": profile comma requires T=240 at 4 fps, got T=" +
                              std::to_string(T) + " fps=" + std::to_string(seq.fps));
    if (seq.profile == SequenceProfile::nuscenes && (T != 20 || seq.fps != 1.0f))
        throw ValidationError("sequence " + seq.id +
                              ": profile nuscenes requires T=20 at 1 fps, got T=" +
                              std::to_string(T) + " fps=" + std::to_string(seq.fps));
}

DriveSequence read_sequence(const std::string& path) {
    detail::ByteReader r(path);
    r.magic("CGSQ");
    const std::uint64_t ver_at = r.offset();
    const std::uint32_t version = r.u32("version");
    if (version != 1)
        throw FormatError(path + ": unsupported version " + std::to_string(version), ver_at);
    const std::uint64_t dims_at = r.offset();
    const std::uint32_t T = r.u32("frame count");
    const std::uint32_t l = r.u32("embedding width");
    if (T > 1000000 || l > 100000 ||
        static_cast<std::uint64_t>(T) * l > 100000000ull)
        throw FormatError(path + ": implausible dimensions " + std::to_string(T) + "x" +
                              std::to_string(l),
                          dims_at);
    DriveSequence seq;
    seq.id = fs::path(path).stem().string();
    seq.fps = r.f32("fps");
    const std::uint64_t flags_at = r.offset();
    const std::uint32_t flags = r.u32("flags");
    const std::uint32_t profile_bits = flags & 0xFFu;
    if (profile_bits > 2 || (flags & ~0xFFu) != 0)
        throw FormatError(path + ": unknown flags " + std::to_string(flags), flags_at);
    seq.profile = static_cast<SequenceProfile>(profile_bits);

    seq.frame_embeddings = Tensor(T, l);
    for (std::size_t i = 0; i < seq.frame_embeddings.size(); ++i)
        seq.frame_embeddings[i] = static_cast<double>(r.f32("embedding value"));
    seq.sensors = Tensor(T, 3);
    for (std::size_t i = 0; i < seq.sensors.size(); ++i)
        seq.sensors[i] = r.f64("sensor value");
    seq.target_angle = r.f64("target angle");
    seq.target_distance = r.f64("target distance");
    const std::uint64_t desc_at = r.offset();
    const std::uint32_t desc_len = r.u32("description length");
    if (desc_len > 10u * 1024u * 1024u)
        throw FormatError(path + ": implausible description length " + std::to_string(desc_len),
                          desc_at);
    seq.scene_description = r.str(desc_len, "description");
    if (!r.at_end()) throw FormatError(path + ": trailing bytes after description", r.offset());

    validate_sequence(seq);
    return seq;
}

void write_sequence(const DriveSequence& seq, const std::string& path) {
    validate_sequence(seq);
    detail::ByteWriter w(path);
    w.magic("CGSQ");
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(seq.frames()));
    w.u32(static_cast<std::uint32_t>(seq.embedding_width()));
    w.f32(seq.fps);
    w.u32(static_cast<std::uint32_t>(seq.profile));
    for (std::size_t i = 0; i < seq.frame_embeddings.size(); ++i)
        w.f32(static_cast<float>(seq.frame_embeddings[i]));
    for (std::size_t i = 0; i < seq.sensors.size(); ++i) w.f64(seq.sensors[i]);
    w.f64(seq.target_angle);
    w.f64(seq.target_distance);
    w.u32(static_cast<std::uint32_t>(seq.scene_description.size()));
    w.str(seq.scene_description);
    w.close();
}

DatasetManifest read_manifest(const std::string& path) {
    json j;
    {
        std::ifstream in(path);
        if (!in) throw FormatError("cannot open " + path, 0);
        try {
            j = json::parse(in);
        } catch (const json::parse_error& e) {
            throw FormatError(path + ": " + e.what(), e.byte);
        }
    }
    DatasetManifest m;
    try {
        m.name = j.at("dataset").get<std::string>();
        m.embedding_width = j.at("embedding_width").get<std::size_t>();
        m.concepts_texts = j.at("concepts").at("texts").get<std::string>();
        m.concepts_embeddings = j.at("concepts").at("embeddings").get<std::string>();
        for (const json& e : j.at("sequences")) {
            DatasetManifest::Entry entry;
            entry.path = e.at("path").get<std::string>();
            entry.profile = profile_from_string(e.at("profile").get<std::string>());
            m.sequences.push_back(std::move(entry));
        }
        if (j.contains("units")) {
            const json& u = j.at("units");
            if (u.at("speed").get<std::string>() != "m/s" ||
                u.at("angle").get<std::string>() != "degrees" ||
                u.at("distance").get<std::string>() != "meters")
                throw ValidationError(path + ": units must be m/s, degrees, meters");
        }
    } catch (const json::exception& e) {
        throw FormatError(path + ": " + e.what(), 0);
    }
    if (m.embedding_width == 0) throw ValidationError(path + ": embedding_width must be positive");
    return m;
}

void write_manifest(const DatasetManifest& m, const std::string& path) {
    json j;
    j["dataset"] = m.name;
    j["embedding_width"] = m.embedding_width;
    j["concepts"] = {{"texts", m.concepts_texts}, {"embeddings", m.concepts_embeddings}};
    json seqs = json::array();
    for (const auto& e : m.sequences)
        seqs.push_back({{"path", e.path}, {"profile", to_string(e.profile)}});
    j["sequences"] = std::move(seqs);
    j["units"] = {{"speed", "m/s"}, {"angle", "degrees"}, {"distance", "meters"}};
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open " + path + " for writing", 0);
    out << j.dump(2) << '\n';
    if (!out) throw FormatError("write to " + path + " failed", 0);
}

std::vector<DriveSequence> load_dataset(const std::string& manifest_path) {
    const DatasetManifest m = read_manifest(manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();
    std::vector<DriveSequence> out;
    out.reserve(m.sequences.size());
    for (const auto& entry : m.sequences) {
        DriveSequence seq = read_sequence((base / entry.path).string());
        if (seq.embedding_width() != m.embedding_width)
            throw ValidationError(entry.path + ": embedding width " +
                                  std::to_string(seq.embedding_width()) +
                                  " does not match manifest width " +
                                  std::to_string(m.embedding_width));
        if (entry.profile != SequenceProfile::custom) {
            if (seq.profile != SequenceProfile::custom && seq.profile != entry.profile)
                throw ValidationError(entry.path + ": file declares profile " +
                                      to_string(seq.profile) + " but manifest says " +
                                      to_string(entry.profile));
            seq.profile = entry.profile;
            validate_sequence(seq);  // re-check (T, fps) under the declared profile
        }
        out.push_back(std::move(seq));
    }
    return out;
}

SensorStats compute_sensor_stats(const std::vector<DriveSequence>& train) {
    if (train.empty()) throw ParamError("sensor stats need a nonempty training split");
    SensorStats stats;
    std::array<double, 3> sum{0, 0, 0}, sumsq{0, 0, 0};
    std::size_t n = 0;
    for (const DriveSequence& seq : train) {
        for (std::size_t t = 0; t < seq.frames(); ++t)
            for (std::size_t c = 0; c < 3; ++c) {
                const double x = seq.sensors.at(t, c);
                sum[c] += x;
                sumsq[c] += x * x;
            }
        n += seq.frames();
    }
    for (std::size_t c = 0; c < 3; ++c) {
        stats.mean[c] = sum[c] / static_cast<double>(n);
        const double var = std::max(0.0, sumsq[c] / static_cast<double>(n) -
                                             stats.mean[c] * stats.mean[c]);
        stats.std[c] = std::max(std::sqrt(var), 1e-6);
    }
    return stats;
}

Tensor standardize_sensors(const Tensor& sensors, const SensorStats& stats) {
    if (sensors.cols() != 3) throw ShapeError("sensor matrix must have 3 columns");
    Tensor out(sensors.rows(), 3);
    for (std::size_t t = 0; t < sensors.rows(); ++t)
        for (std::size_t c = 0; c < 3; ++c)
            out.at(t, c) = (sensors.at(t, c) - stats.mean[c]) / stats.std[c];
    return out;
}

// ---- synthetic generator ----

double SyntheticTruth::distance_rule(const std::vector<double>& w) const {
    double d = distance_base;
    for (std::size_t j = 0; j < informative_indices.size(); ++j)
        d += distance_coeffs[j] * w[informative_indices[j]];
    return d;
}

double SyntheticTruth::angle_rule(const std::vector<double>& w) const {
    double a = 0.0;
    for (std::size_t j = 0; j < informative_indices.size(); ++j)
        a += angle_coeffs[j] * w[informative_indices[j]];
    return a;
}

namespace {

// Unique single content words for generated concept texts. The first three
// concepts carry the semantics the target rules lean on; the rest only need
// distinct, stopword-free vocabulary.
const char* kDrivingWords[40] = {
    "pedestrian", "crosswalk",  "bicycle",   "truck",     "tunnel",
    "bridge",     "roundabout", "highway",   "overpass",  "rain",
    "snow",       "fog",        "sunset",    "traffic",   "signal",
    "intersection", "lane",     "curve",     "hill",      "parking",
    "bus",        "motorcycle", "trailer",   "construction", "detour",
    "gravel",     "asphalt",    "guardrail", "median",    "shoulder",
    "billboard",  "streetlight", "alley",    "driveway",  "underpass",
    "viaduct",    "plaza",      "harbor",    "orchard",   "meadow"};

std::string pseudo_word(std::size_t i) {
    static const char* consonants = "bdfgklmnprstvz";
    static const char* vowels = "aeiou";
    std::string w = "zq";
    for (int s = 0; s < 3; ++s) {
        w.push_back(consonants[(i % 70) % 14]);
        w.push_back(vowels[(i % 70) / 14]);
        i /= 70;
    }
    return w;
}

std::string concept_text(std::size_t i) {
    if (i == 0) return "a photo of a car ahead in close proximity";
    if (i == 1) return "a photo of a junction";
    if (i == 2) return "a photo of a straight road";
    if (i < 43) return std::string("a photo of ") + kDrivingWords[i - 3];
    return "a photo of " + pseudo_word(i - 43);
}

Tensor make_concept_vectors(std::size_t k, std::size_t l, SplitMix64& rng) {
    Tensor c(k, l);
    for (std::size_t i = 0; i < k; ++i) {
        for (;;) {
            std::vector<double> v(l);
            for (std::size_t j = 0; j < l; ++j) v[j] = rng.next_normal();
            if (l >= k) {
                // orthonormalize against earlier rows so mixture weights map
                // cleanly onto cosine scores
                for (std::size_t p = 0; p < i; ++p) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < l; ++j) dot += v[j] * c.at(p, j);
                    for (std::size_t j = 0; j < l; ++j) v[j] -= dot * c.at(p, j);
                }
            }
            double sq = 0.0;
            for (std::size_t j = 0; j < l; ++j) sq += v[j] * v[j];
            const double norm = std::sqrt(sq);
            if (norm > 1e-6) {
                for (std::size_t j = 0; j < l; ++j) c.at(i, j) = v[j] / norm;
                break;
            }
        }
    }
    return c;
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.n_concepts < 4) throw ParamError("synthetic generator needs k >= 4");
    if (spec.embedding_width < 4) throw ParamError("synthetic generator needs l >= 4");
    if (spec.n_sequences < 1) throw ParamError("synthetic generator needs n_sequences >= 1");
    if (spec.frames < 2) throw ParamError("synthetic generator needs frames >= 2");
    if (spec.noise_std < 0.0) throw ParamError("noise_std must be nonnegative");
    if (!(spec.fps > 0.0f)) throw ParamError("fps must be positive");
    if (spec.profile == SequenceProfile::comma && (spec.frames != 240 || spec.fps != 4.0f))
        throw ParamError("profile comma requires frames=240 at 4 fps");
    if (spec.profile == SequenceProfile::nuscenes && (spec.frames != 20 || spec.fps != 1.0f))
        throw ParamError("profile nuscenes requires frames=20 at 1 fps");

    const std::size_t k = spec.n_concepts, l = spec.embedding_width, T = spec.frames;
    const std::size_t n_informative = std::min<std::size_t>(10, k);

    SplitMix64 crng(derive_seed(spec.seed, "synthetic-concepts"));
    Tensor cvec = make_concept_vectors(k, l, crng);
    std::vector<std::string> texts;
    texts.reserve(k);
    for (std::size_t i = 0; i < k; ++i) texts.push_back(concept_text(i));
    ConceptSet concepts(texts, cvec, SourceTag::generated, /*normalize=*/false);

    SyntheticTruth truth;
    truth.n_concepts = k;
    truth.noise_std = spec.noise_std;
    truth.bayes_mae = spec.noise_std * std::sqrt(2.0 / std::numbers::pi);
    static const double dcoef[10] = {-45, 0, 0, -6, 6, 3, -3, 0, 0, 0};
    static const double acoef[10] = {0, 12, -12, 0, 0, 0, 0, 3, -3, 1.5};
    for (std::size_t j = 0; j < n_informative; ++j) {
        truth.informative_indices.push_back(j);
        truth.distance_coeffs.push_back(dcoef[j]);
        truth.angle_coeffs.push_back(acoef[j]);
    }

    SyntheticDataset out{std::move(concepts), {}, std::move(truth)};
    out.sequences.reserve(spec.n_sequences);

    for (std::size_t s = 0; s < spec.n_sequences; ++s) {
        SplitMix64 rng(derive_seed(spec.seed, "synthetic-seq", s));
        const std::size_t scene = s % n_informative;
        const double phase = 2.0 * std::numbers::pi * rng.next_double();

        DriveSequence seq;
        char idbuf[16];
        std::snprintf(idbuf, sizeof idbuf, "seq_%04zu", s);
        seq.id = idbuf;
        seq.fps = spec.fps;
        seq.profile = spec.profile;
        seq.scene_description = out.concepts.texts()[scene];
        seq.frame_embeddings = Tensor(T, l);
        seq.sensors = Tensor(T, 3);

        std::vector<double> w(k);
        for (std::size_t t = 0; t < T; ++t) {
            std::fill(w.begin(), w.end(), 0.0);
            w[scene] = 0.55 + 0.35 * rng.next_double();
            const std::uint64_t n_minor = rng.next_below(3);
            for (std::uint64_t m = 0; m < n_minor; ++m) {
                std::size_t idx;
                do {
                    idx = rng.next_below(k);
                } while (idx == scene || w[idx] != 0.0);
                w[idx] = 0.05 + 0.30 * rng.next_double();
            }

            for (std::size_t c = 0; c < l; ++c) {
                double e = 0.0;
                for (std::size_t j = 0; j < k; ++j)
                    if (w[j] != 0.0) e += w[j] * out.concepts.embeddings().at(j, c);
                if (spec.noise_std > 0.0) e += 0.1 * spec.noise_std * rng.next_normal();
                seq.frame_embeddings.at(t, c) = e;
            }

            const double tau = static_cast<double>(t) / static_cast<double>(T);
            double v = 15.0 + 5.0 * std::sin(2.0 * std::numbers::pi * tau + phase);
            double a = out.truth.angle_rule(w);
            double d = out.truth.distance_rule(w);
            if (spec.noise_std > 0.0) {
                v += spec.noise_std * rng.next_normal();
                a += spec.noise_std * rng.next_normal();
                d += spec.noise_std * rng.next_normal();
            }
            seq.sensors.at(t, kSensorSpeed) = std::max(0.0, v);
            seq.sensors.at(t, kSensorAngle) = a;
            seq.sensors.at(t, kSensorDistance) = std::clamp(d, 0.0, 69.9);
        }

        seq.target_angle = seq.sensors.at(T - 1, kSensorAngle);
        seq.target_distance = seq.sensors.at(T - 1, kSensorDistance);
        out.truth.scene_concept.push_back(scene);
        out.truth.final_weights.push_back(w);

        validate_sequence(seq);
        out.sequences.push_back(std::move(seq));
    }
    return out;
}

}  // namespace conceptdrive
