#pragma once

#include "metadetect/dataset.hpp"
#include "metadetect/detection.hpp"

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace metadetect {

/// A candidate with the image it belongs to, as stored in the dump.
struct DumpRow {
    std::string image_id;
    CandidateBox candidate;
};

struct GroundTruthRow {
    std::string image_id;
    GroundTruthBox gt;
};

std::vector<std::string> candidate_header(int num_classes);
std::vector<std::string> ground_truth_header();
/// image_id, canonical feature names, true_iou, is_tp.
std::vector<std::string> feature_table_header(int num_classes, bool with_dropout);

/// Readers reject unknown, missing or reordered columns and report the
/// 1-based line number of malformed lines (Error(format)); value-range
/// violations are Error(schema).
std::vector<DumpRow> read_candidates(std::istream& in, int num_classes);
std::vector<GroundTruthRow> read_ground_truth(std::istream& in, int num_classes);
void write_candidates(std::ostream& out, const std::vector<DumpRow>& rows, int num_classes);
void write_ground_truth(std::ostream& out, const std::vector<GroundTruthRow>& rows);

/// The class count and dropout flag are recovered from the header.
MetricTable read_feature_table(std::istream& in);
void write_feature_table(std::ostream& out, const MetricTable& table);

/// Groups dump and ground truth by image, sorted by image id. Images with
/// only ground truth (or only candidates) are kept.
std::vector<ImageData> group_by_image(const std::vector<DumpRow>& dump, const std::vector<GroundTruthRow>& gts);

/// Full-precision decimal rendering used by every CSV writer.
std::string format_number(double v);

// Path-based conveniences; Error(io) when a file cannot be opened.
std::vector<DumpRow> read_candidates_file(const std::string& path, int num_classes);
std::vector<GroundTruthRow> read_ground_truth_file(const std::string& path, int num_classes);
MetricTable read_feature_table_file(const std::string& path);
void write_feature_table_file(const std::string& path, const MetricTable& table);

}  // namespace metadetect
