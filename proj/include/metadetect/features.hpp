#pragma once

#include "metadetect/detection.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace metadetect {

inline constexpr std::size_t kBaseMetricCountWithoutClasses = 46;
inline constexpr std::size_t kDropoutMetricCount = 20;
inline constexpr double kTruePositiveIou = 0.5;

/// Provenance of a SMOTE-synthesized row: indices (into the table it was
/// generated from) of the sample and the neighbour it was interpolated towards.
struct SyntheticOrigin {
    std::size_t sample = 0;
    std::size_t neighbour = 0;
};

/// One predicted box as a row of the structured dataset.
struct MetricRow {
    std::string image_id;
    std::size_t box_index = 0;  ///< survivor position within its image
    std::vector<double> features;
    double true_iou = 0.0;
    bool is_tp = false;
    std::optional<SyntheticOrigin> origin;

    bool synthetic() const noexcept { return origin.has_value(); }
};

/// Canonical column names, in emission order. 46+C names, or 66+C with dropout.
///
/// Layout:
///   N
///   r_min r_max c_min c_max s p_1..p_C
///   d g
///   iou_pb
///   {r_min,r_max,c_min,c_max,s,d,g}_{min,max,mean,std}
///   iou_{min,max,mean,std}
///   rd rd_min rd_max rd_mean rd_std
///   {r_min,r_max,c_min,c_max,s}_{min,max,mean,std}_mc    (dropout only)
std::vector<std::string> feature_names(int num_classes, bool with_dropout);

/// The 46+C base metrics of a survivor. Throws Error(schema) if the
/// survivor's probability vector does not have C entries.
std::vector<double> build_features(const SurvivorRecord& rec, int num_classes);

/// min/max/mean/std of r_min, r_max, c_min, c_max and s over the survivor
/// and its dropout observations (20 values).
std::vector<double> build_dropout_features(const SurvivorRecord& rec);

/// IoU of the survivor with the highest-scoring box it suppressed; 0 if none.
double iou_pb(const SurvivorRecord& rec);

/// Max IoU of the survivor with a ground-truth box of its predicted class; 0 if none.
double label_iou(const SurvivorRecord& rec, std::span<const GroundTruthBox> gts);

/// Features plus label for one survivor.
MetricRow make_row(const SurvivorRecord& rec, std::size_t box_index, std::span<const GroundTruthBox> gts,
                   int num_classes, bool with_dropout);

/// Summary statistics with population standard deviation.
struct Stats {
    double min = 0.0;
    double max = 0.0;
    double mean = 0.0;
    double std = 0.0;
};

/// All-zero for an empty range.
Stats summarize(std::span<const double> values) noexcept;

}  // namespace metadetect
