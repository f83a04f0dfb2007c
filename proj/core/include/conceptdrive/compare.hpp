#pragma once

#include <optional>
#include <string>
#include <vector>

#include "conceptdrive/concepts.hpp"
#include "conceptdrive/data.hpp"
#include "conceptdrive/training.hpp"

namespace conceptdrive {

struct CompareRow {
    std::string set_tag;  // where the concept list came from
    std::size_t size = 0;
    std::optional<double> distance_mae;
    std::optional<double> angle_mae;
};

/// Trains one model per concept set on the same data, split, and seed, and
/// reports test MAE per set. Sets must share their embedding width
/// (ValidationError otherwise); identical sets produce identical rows.
std::vector<CompareRow> compare_concept_sets(const ConceptSet& a, const ConceptSet& b,
                                             const std::vector<DriveSequence>& data,
                                             const ModelConfig& base_config,
                                             const TrainConfig& train_config);

/// CSV: set_tag,size,d_mae,a_mae.
std::string compare_csv(const std::vector<CompareRow>& rows);

}  // namespace conceptdrive
