#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "conceptdrive/concepts.hpp"
#include "conceptdrive/tensor.hpp"

namespace conceptdrive {

/// Known recording profiles; declaring one pins (T, fps) at validation.
enum class SequenceProfile : std::uint32_t { custom = 0, comma = 1, nuscenes = 2 };

std::string to_string(SequenceProfile p);
SequenceProfile profile_from_string(const std::string& s);

/// Column layout of the per-frame sensor matrix.
inline constexpr std::size_t kSensorSpeed = 0;     // v, m/s
inline constexpr std::size_t kSensorAngle = 1;     // a, degrees
inline constexpr std::size_t kSensorDistance = 2;  // d, meters

struct DriveSequence {
    std::string id;
    Tensor frame_embeddings;  // T x l, image-embedding space
    Tensor sensors;           // T x 3, columns (v, a, d)
    double target_angle = 0.0;     // degrees, at the final frame
    double target_distance = 0.0;  // meters, at the final frame
    float fps = 0.0f;
    SequenceProfile profile = SequenceProfile::custom;
    std::string scene_description;  // optional; empty means none

    std::size_t frames() const { return sensors.rows(); }
    std::size_t embedding_width() const { return frame_embeddings.cols(); }
};

/// Throws ValidationError naming the violated field: T >= 2, matching row
/// counts, finite values, v >= 0, d >= 0, declared profile matches (T, fps).
void validate_sequence(const DriveSequence& seq);

/// Binary sequence file, magic "CGSQ" (see write_sequence for the layout).
/// Structural damage raises FormatError with the byte offset; a parsed file
/// violating sequence invariants raises ValidationError naming the field.
/// The sequence id is taken from the file stem.
DriveSequence read_sequence(const std::string& path);

/// Layout: "CGSQ", version u32=1, T u32, l u32, fps f32, flags u32 (low
/// byte = profile), embeddings f32 row-major, sensors f64 row-major (v, a,
/// d), targets f64 (angle, distance), description u32 length + UTF-8.
/// Identical sequences serialize to identical bytes.
void write_sequence(const DriveSequence& seq, const std::string& path);

struct DatasetManifest {
    std::string name;
    std::size_t embedding_width = 0;
    std::string concepts_texts;  // paths relative to the manifest directory
    std::string concepts_embeddings;
    struct Entry {
        std::string path;
        SequenceProfile profile = SequenceProfile::custom;
    };
    std::vector<Entry> sequences;
    // units are fixed: speed m/s, angle degrees, distance meters
};

/// Canonical JSON (sorted keys) holding the manifest plus the fixed units
/// declaration; a units block that disagrees is a ValidationError.
DatasetManifest read_manifest(const std::string& path);
void write_manifest(const DatasetManifest& m, const std::string& path);

/// Reads every sequence listed in the manifest (paths resolved against the
/// manifest's directory), checks width consistency and per-entry profile
/// agreement. Order follows the manifest.
std::vector<DriveSequence> load_dataset(const std::string& manifest_path);

/// Per-channel standardization statistics, computed on the training split
/// only; std has a 1e-6 floor so constant channels map to zeros.
struct SensorStats {
    std::array<double, 3> mean{0.0, 0.0, 0.0};
    std::array<double, 3> std{1.0, 1.0, 1.0};
};

SensorStats compute_sensor_stats(const std::vector<DriveSequence>& train);
/// (x - mean) / std per column of a T x 3 sensor matrix.
Tensor standardize_sensors(const Tensor& sensors, const SensorStats& stats);

// ---- synthetic drive generator ----

struct SyntheticSpec {
    std::size_t n_sequences = 64;
    std::size_t frames = 20;          // T
    std::size_t embedding_width = 32; // l
    std::size_t n_concepts = 24;      // k
    std::uint64_t seed = 0;
    double noise_std = 0.05;
    float fps = 4.0f;
    SequenceProfile profile = SequenceProfile::custom;
};

/// The generating process, emitted alongside the data so tests can compute
/// Bayes-optimal predictions: targets are fixed linear rules over the final
/// frame's concept mixture weights plus Gaussian noise.
struct SyntheticTruth {
    std::size_t n_concepts = 0;
    std::vector<std::size_t> informative_indices;    // first min(10, k) concepts
    std::vector<double> distance_coeffs;             // per informative index
    double distance_base = 60.0;
    std::vector<double> angle_coeffs;                // per informative index
    double noise_std = 0.0;
    double bayes_mae = 0.0;                          // E|N(0, noise_std)| = noise_std*sqrt(2/pi)
    std::vector<std::size_t> scene_concept;          // per sequence
    std::vector<std::vector<double>> final_weights;  // per sequence, k mixture weights

    /// Noise-free targets implied by a weight vector.
    double distance_rule(const std::vector<double>& w) const;
    double angle_rule(const std::vector<double>& w) const;
};

struct SyntheticDataset {
    ConceptSet concepts;
    std::vector<DriveSequence> sequences;
    SyntheticTruth truth;
};

/// Deterministic per seed. Each frame embedding is a noisy nonnegative
/// mixture of one dominant "scene" concept plus up to two minor concepts;
/// sensors follow fixed rules over the mixture weights; the regression
/// targets are the final frame's angle/distance values. Scene descriptions
/// are the scene concept's text.
SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace conceptdrive
