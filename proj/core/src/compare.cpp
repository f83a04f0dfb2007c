#include "conceptdrive/compare.hpp"

#include "conceptdrive/errors.hpp"
#include "fmt_util.hpp"

namespace conceptdrive {

namespace {

CompareRow run_one(const ConceptSet& set, const std::vector<DriveSequence>& data,
                   const ModelConfig& base_config, const TrainConfig& train_config) {
    ModelConfig config = base_config;
    config.input_dim = set.size() + 3;

    const DatasetSplit split =
        split_dataset(data.size(), SplitRatios{}, train_config.seed);
    const FitResult fitted = fit(gather(data, split.train), gather(data, split.val), set,
                                 config, train_config);
    const EvalReport ev = evaluate(gather(data, split.test), set, fitted.params, config,
                                   train_config.distance_cap);

    CompareRow row;
    row.set_tag = to_string(set.source_tag());
    row.size = set.size();
    row.distance_mae = ev.distance_mae;
    row.angle_mae = ev.angle_mae;
    return row;
}

}  // namespace

std::vector<CompareRow> compare_concept_sets(const ConceptSet& a, const ConceptSet& b,
                                             const std::vector<DriveSequence>& data,
                                             const ModelConfig& base_config,
                                             const TrainConfig& train_config) {
    if (a.width() != b.width())
        throw ValidationError("concept sets have different embedding widths: " +
                              std::to_string(a.width()) + " vs " +
                              std::to_string(b.width()));
    return {run_one(a, data, base_config, train_config),
            run_one(b, data, base_config, train_config)};
}

std::string compare_csv(const std::vector<CompareRow>& rows) {
    std::string out = "set_tag,size,d_mae,a_mae\n";
    for (const CompareRow& r : rows) {
        out += r.set_tag;
        out += ',';
        out += std::to_string(r.size);
        out += ',';
        if (r.distance_mae) out += detail::fmt_double(*r.distance_mae);
        out += ',';
        if (r.angle_mae) out += detail::fmt_double(*r.angle_mae);
        out += '\n';
    }
    return out;
}

}  // namespace conceptdrive
