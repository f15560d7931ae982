#pragma once

#include "metadetect/geometry.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace metadetect {

/// A statistic that may be undefined for degenerate input (constant data).
/// When `degenerate` is set, `value` is 0.
struct Measured {
    double value = 0.0;
    bool degenerate = false;
};

/// Sample Pearson correlation. Error(data) on unequal lengths or n < 2.
Measured pearson(std::span<const double> x, std::span<const double> y);

/// 1 - SS_res / SS_tot; degenerate when y_true is constant.
Measured r2(std::span<const double> y_true, std::span<const double> y_pred);

/// Population standard deviation of the residuals y_true - y_pred.
double residual_std(std::span<const double> y_true, std::span<const double> y_pred);

/// Fraction of rows where (prob >= threshold) equals the label. Error(data) on empty input.
double accuracy(std::span<const double> labels, std::span<const double> probs, double threshold = 0.5);

/// Mann-Whitney AUROC with midranks for ties. Error(data) unless both classes occur.
double auroc(std::span<const double> labels, std::span<const double> probs);

enum class ApInterpolation { all_point, eleven_point };

/// A scored detection or ground-truth box within one class.
struct ScoredBox {
    std::string image_id;
    BBox box;
    double score = 0.0;
};

struct ApResult {
    double ap = 0.0;
    std::vector<double> precision;  ///< after each prediction, by descending score
    std::vector<double> recall;
    std::size_t gt_count = 0;
    std::size_t matched = 0;
};

/// Per-class AP. Predictions are visited by descending score (stable); each
/// takes its highest-IoU ground truth in the same image, and counts as a true
/// positive only if that IoU is >= iou_threshold and the box is not yet taken.
ApResult average_precision(std::span<const ScoredBox> predictions, std::span<const ScoredBox> ground_truth,
                           double iou_threshold = 0.5, ApInterpolation interp = ApInterpolation::all_point);

struct MapResult {
    double map = 0.0;
    std::map<int, double> per_class;    ///< classes with >= 1 GT box
    std::vector<int> excluded_classes;  ///< classes without GT, left out of the mean
};

/// Unweighted mean AP over classes that have ground truth. Keys are class indices.
MapResult mean_average_precision(const std::map<int, std::vector<ScoredBox>>& predictions,
                                 const std::map<int, std::vector<ScoredBox>>& ground_truth,
                                 double iou_threshold = 0.5, ApInterpolation interp = ApInterpolation::all_point);

}  // namespace metadetect
