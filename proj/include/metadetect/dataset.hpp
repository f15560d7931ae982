#pragma once

#include "metadetect/detection.hpp"
#include "metadetect/features.hpp"
#include "metadetect/matrix.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace metadetect {

struct MetricTable {
    std::vector<std::string> header;  ///< canonical feature names (no image_id / labels)
    std::vector<MetricRow> rows;
    int num_classes = 1;
    bool dropout_enabled = false;

    std::size_t size() const noexcept { return rows.size(); }
    std::size_t count_tp() const noexcept;
};

/// An empty table with the canonical header for C classes.
MetricTable make_table(int num_classes, bool with_dropout);

/// Throws Error(schema) if any row disagrees with the header width or the
/// header differs from the canonical order, and Error(format) on duplicated
/// (image_id, box_index) pairs.
void validate(const MetricTable& table);

struct ExtractOptions {
    int num_classes = 1;
    double score_threshold = 0.0;
    double tau = kDefaultNmsTau;
    bool with_dropout = false;
};

/// Candidates and ground truth of one image.
struct ImageData {
    std::string image_id;
    std::vector<CandidateBox> candidates;
    std::vector<GroundTruthBox> ground_truth;
};

/// score_filter -> nms -> attach_dropout -> features -> label for one image.
std::vector<MetricRow> extract_image(const ImageData& image, const ExtractOptions& opts);

/// Runs extract_image over every image (in parallel when `threads` > 1) and
/// concatenates rows in input image order.
MetricTable extract_table(std::span<const ImageData> images, const ExtractOptions& opts, unsigned threads = 0);

/// Seeded uniform permutation split into two halves; the extra row of an odd
/// count goes to train. Throws Error(data) on fewer than 2 rows.
std::pair<MetricTable, MetricTable> split_resample(const MetricTable& table, std::uint64_t seed);

inline constexpr int kDefaultSmoteK = 5;

/// Oversamples the minority class (by is_tp) until both classes are equally
/// frequent. Neighbours are searched among minority rows in z-scored feature
/// space; k is clamped to minority_size - 1. Original rows come first and are
/// untouched; synthetic rows carry an `origin`. Throws Error(data) on
/// single-class input or a minority with fewer than 2 rows, Error(config) on k < 1.
MetricTable smote(const MetricTable& train, int k, std::uint64_t seed);

/// Column indices of `wanted` within `header`; Error(schema) on a missing name.
std::vector<std::size_t> column_indices(std::span<const std::string> header, std::span<const std::string> wanted);

/// Copy of the table keeping only the named feature columns, in the given
/// order. The result is a working table; its header is no longer canonical.
MetricTable select_columns(const MetricTable& table, std::span<const std::string> names);

/// Feature matrix restricted to the given columns.
Matrix to_matrix(const MetricTable& table, std::span<const std::size_t> columns);

std::vector<double> iou_targets(const MetricTable& table);
std::vector<double> tp_targets(const MetricTable& table);

}  // namespace metadetect
