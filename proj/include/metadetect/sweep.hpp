#pragma once

#include "metadetect/dataset.hpp"
#include "metadetect/meta_model.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace metadetect {

/// Which metric columns a meta model sees.
enum class FeatureSet {
    baseline,            ///< the objectness score s only
    metadetect,          ///< the 46+C base metrics
    metadetect_dropout,  ///< base metrics plus the 20 dropout metrics
};

std::string_view to_string(FeatureSet fs) noexcept;
/// Accepts "baseline", "metadetect", "metadetect-dropout".
FeatureSet parse_feature_set(std::string_view s);
bool needs_dropout(FeatureSet fs) noexcept;
std::vector<std::string> feature_set_columns(FeatureSet fs, int num_classes);

/// Validation-set metrics of one fitted model: accuracy and auroc for
/// classification, r2 and residual_std for regression. Metrics that are
/// undefined on the given rows (single-class AUROC, constant-target R2) are
/// omitted. Throws Error(data) if `val` contains synthetic rows.
std::map<std::string, double> evaluate_model(const MetaModel& model, const MetricTable& val);

/// Fits `family` for `task` on `train` restricted to the columns of `fs`.
/// Classification training data is SMOTE-balanced first when `smote_k` > 0.
MetaModel train_model(const MetricTable& train, ModelFamily family, FeatureSet fs, Task task, std::uint64_t seed,
                      int smote_k);

struct SweepConfig {
    int num_classes = 1;
    double tau = kDefaultNmsTau;
    std::vector<double> thresholds;
    std::vector<ModelFamily> families{ModelFamily::gbdt};
    std::vector<FeatureSet> feature_sets{FeatureSet::baseline, FeatureSet::metadetect};
    std::vector<Task> tasks{Task::classification, Task::regression};
    int runs = 10;
    std::uint64_t base_seed = 0;
    int smote_k = kDefaultSmoteK;  ///< 0 disables SMOTE
    bool collect_scatter = false;  ///< keep (true, predicted) IoU pairs of run 0
    unsigned threads = 0;
};

/// Mean and population std of one metric over the runs.
struct SweepCell {
    double threshold = 0.0;
    ModelFamily family = ModelFamily::gbdt;
    FeatureSet feature_set = FeatureSet::baseline;
    std::string metric;
    std::vector<double> values;  ///< one per run, in run order
    double mean = 0.0;
    double std = 0.0;
};

struct ThresholdSummary {
    double threshold = 0.0;
    std::size_t rows = 0;
    std::size_t tp = 0;
    std::size_t fp = 0;
    double map = 0.0;  ///< AP@.5 of the surviving boxes, all-point interpolation
    bool skipped = false;
};

struct ScatterSeries {
    double threshold = 0.0;
    ModelFamily family = ModelFamily::gbdt;
    FeatureSet feature_set = FeatureSet::baseline;
    std::vector<double> true_iou;
    std::vector<double> predicted_iou;
};

struct SweepReport {
    int runs = 0;
    std::vector<std::uint64_t> seeds;  ///< base_seed + run index
    std::vector<ThresholdSummary> thresholds;
    std::vector<SweepCell> cells;
    std::vector<ScatterSeries> scatter;
    std::vector<std::string> warnings;

    const SweepCell* find(double threshold, ModelFamily family, FeatureSet fs, std::string_view metric) const;
};

/// For every threshold: filter, NMS, features and labels; then for each run
/// split, fit every family on every feature set and evaluate on the
/// validation half. Thresholds with fewer than 2 validation rows are skipped
/// with a warning.
SweepReport sweep(std::span<const ImageData> images, const SweepConfig& config);

/// Long format: threshold,family,feature_set,metric,mean,std,runs.
void write_report_csv(std::ostream& out, const SweepReport& report);
/// threshold,rows,tp,fp,map,status.
void write_threshold_csv(std::ostream& out, const SweepReport& report);
/// One aligned table per (metric, family): thresholds as rows, feature sets as columns.
void write_report_text(std::ostream& out, const SweepReport& report);
/// true_iou,predicted_iou.
void write_scatter_csv(std::ostream& out, const ScatterSeries& series);

}  // namespace metadetect
