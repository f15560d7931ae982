#pragma once

#include "metadetect/geometry.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace metadetect {

/// One detector output: box, objectness score and class distribution.
/// `dropout_run` is 0 for the base inference and 1..J for dropout passes.
struct CandidateBox {
    BBox box;
    double score = 0.0;
    std::vector<double> probs;
    std::int64_t anchor_id = 0;
    int dropout_run = 0;

    /// 1-based argmax of `probs`; ties go to the lowest class index.
    int predicted_class() const noexcept;

    friend bool operator==(const CandidateBox&, const CandidateBox&) = default;
};

struct GroundTruthBox {
    BBox box;
    int class_index = 1;  ///< 1..C
};

/// An NMS survivor together with the candidates it removed and, when
/// available, the dropout observations of its anchor.
struct SurvivorRecord {
    std::string image_id;
    CandidateBox survivor;
    std::vector<CandidateBox> suppressed;
    std::vector<CandidateBox> dropout_obs;

    std::size_t cluster_size() const noexcept { return 1 + suppressed.size(); }
};

/// Throws Error(schema) if the candidate violates its value ranges for C classes.
void validate(const CandidateBox& c, int num_classes);
void validate(const GroundTruthBox& g, int num_classes);

inline constexpr double kDefaultNmsTau = 0.45;

/// Keeps base-inference boxes (dropout_run == 0) whose score is >= t, in input order.
std::vector<CandidateBox> score_filter(std::span<const CandidateBox> candidates, double t);

/// Greedy class-wise NMS. Every input box ends up either as a survivor or in
/// exactly one survivor's `suppressed` list (the survivor that removed it).
/// Score ties are resolved by the lower input index. Suppression is inclusive
/// (IoU >= tau). Survivors are returned in selection order.
std::vector<SurvivorRecord> nms(std::span<const CandidateBox> filtered, double tau,
                                const std::string& image_id = {});

/// Joins dropout observations (dropout_run >= 1) to survivors by anchor id,
/// ordered by dropout_run. `all_candidates` must come from a single image.
/// Throws Error(format) on duplicate (anchor_id, dropout_run) pairs.
void attach_dropout(std::vector<SurvivorRecord>& records,
                    std::span<const CandidateBox> all_candidates);

enum class ScheduleKind { linear, log };

/// linear: 0.01 followed by k/40 for k = 1..32 (33 values, increasing).
/// log: 1e-1 down to 1e-12 (12 values, decreasing).
std::vector<double> threshold_schedule(ScheduleKind kind);

}  // namespace metadetect
