#include "metadetect/features.hpp"
#include "metadetect/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <fmt/core.h>

namespace metadetect {
namespace {

constexpr std::array<const char*, 7> kClusterVars{"r_min", "r_max", "c_min", "c_max", "s", "d", "g"};
constexpr std::array<const char*, 5> kDropoutVars{"r_min", "r_max", "c_min", "c_max", "s"};
constexpr std::array<const char*, 4> kStatSuffixes{"min", "max", "mean", "std"};

constexpr double kRelativeSizeEps = 1e-12;

std::array<double, 7> cluster_values(const CandidateBox& c) {
    return {c.box.r_min, c.box.r_max, c.box.c_min, c.box.c_max, c.score, area(c.box), circumference(c.box)};
}

double guarded_ratio(double num, double den) {
    return std::abs(den) < kRelativeSizeEps ? 0.0 : num / den;
}

void push_stats(std::vector<double>& out, const Stats& s) {
    out.insert(out.end(), {s.min, s.max, s.mean, s.std});
}

}  // namespace

Stats summarize(std::span<const double> values) noexcept {
    if (values.empty()) return {};
    Stats s;
    s.min = std::numeric_limits<double>::infinity();
    s.max = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (double v : values) {
        s.min = std::min(s.min, v);
        s.max = std::max(s.max, v);
        sum += v;
    }
    const double n = static_cast<double>(values.size());
    s.mean = std::clamp(sum / n, s.min, s.max);
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(sq / n);
    return s;
}

std::vector<std::string> feature_names(int num_classes, bool with_dropout) {
    std::vector<std::string> names{"N", "r_min", "r_max", "c_min", "c_max", "s"};
    for (int k = 1; k <= num_classes; ++k) names.push_back(fmt::format("p_{}", k));
    names.insert(names.end(), {"d", "g", "iou_pb"});
    for (const char* var : kClusterVars) {
        for (const char* suffix : kStatSuffixes) names.push_back(fmt::format("{}_{}", var, suffix));
    }
    for (const char* suffix : kStatSuffixes) names.push_back(fmt::format("iou_{}", suffix));
    names.insert(names.end(), {"rd", "rd_min", "rd_max", "rd_mean", "rd_std"});
    if (with_dropout) {
        for (const char* var : kDropoutVars) {
            for (const char* suffix : kStatSuffixes) names.push_back(fmt::format("{}_{}_mc", var, suffix));
        }
    }
    return names;
}

double iou_pb(const SurvivorRecord& rec) {
    if (rec.suppressed.empty()) return 0.0;
    // First maximum wins, matching the NMS tie rule.
    const auto it = std::max_element(rec.suppressed.begin(), rec.suppressed.end(),
                                     [](const CandidateBox& a, const CandidateBox& b) { return a.score < b.score; });
    return iou(rec.survivor.box, it->box);
}

std::vector<double> build_features(const SurvivorRecord& rec, int num_classes) {
    const CandidateBox& sv = rec.survivor;
    if (static_cast<int>(sv.probs.size()) != num_classes) {
        throw Error(ErrorKind::schema,
                    fmt::format("survivor has {} class probabilities, expected {}", sv.probs.size(), num_classes));
    }

    std::vector<double> out;
    out.reserve(kBaseMetricCountWithoutClasses + static_cast<std::size_t>(num_classes));

    out.push_back(static_cast<double>(rec.cluster_size()));
    out.insert(out.end(), {sv.box.r_min, sv.box.r_max, sv.box.c_min, sv.box.c_max, sv.score});
    out.insert(out.end(), sv.probs.begin(), sv.probs.end());

    const double d = area(sv.box);
    const double g = circumference(sv.box);
    out.insert(out.end(), {d, g, iou_pb(rec)});

    std::array<std::vector<double>, 7> columns;
    auto add_member = [&](const CandidateBox& c) {
        const auto vals = cluster_values(c);
        for (std::size_t k = 0; k < vals.size(); ++k) columns[k].push_back(vals[k]);
    };
    add_member(sv);
    for (const auto& c : rec.suppressed) add_member(c);

    Stats g_stats;
    for (std::size_t k = 0; k < columns.size(); ++k) {
        const Stats s = summarize(columns[k]);
        push_stats(out, s);
        if (k == 6) g_stats = s;
    }

    std::vector<double> ious;
    ious.reserve(rec.suppressed.size());
    for (const auto& c : rec.suppressed) ious.push_back(iou(sv.box, c.box));
    push_stats(out, summarize(ious));

    out.push_back(guarded_ratio(d, g));
    out.push_back(guarded_ratio(d, g_stats.min));
    out.push_back(guarded_ratio(d, g_stats.max));
    out.push_back(guarded_ratio(d, g_stats.mean));
    out.push_back(guarded_ratio(d, g_stats.std));
    return out;
}

std::vector<double> build_dropout_features(const SurvivorRecord& rec) {
    std::array<std::vector<double>, 5> columns;
    auto add = [&](const CandidateBox& c) {
        columns[0].push_back(c.box.r_min);
        columns[1].push_back(c.box.r_max);
        columns[2].push_back(c.box.c_min);
        columns[3].push_back(c.box.c_max);
        columns[4].push_back(c.score);
    };
    add(rec.survivor);
    for (const auto& c : rec.dropout_obs) add(c);

    std::vector<double> out;
    out.reserve(kDropoutMetricCount);
    for (const auto& col : columns) push_stats(out, summarize(col));
    return out;
}

double label_iou(const SurvivorRecord& rec, std::span<const GroundTruthBox> gts) {
    const int cls = rec.survivor.predicted_class();
    double best = 0.0;
    for (const auto& gt : gts) {
        if (gt.class_index == cls) best = std::max(best, iou(rec.survivor.box, gt.box));
    }
    return best;
}

MetricRow make_row(const SurvivorRecord& rec, std::size_t box_index, std::span<const GroundTruthBox> gts,
                   int num_classes, bool with_dropout) {
    MetricRow row;
    row.image_id = rec.image_id;
    row.box_index = box_index;
    row.features = build_features(rec, num_classes);
    if (with_dropout) {
        const auto mc = build_dropout_features(rec);
        row.features.insert(row.features.end(), mc.begin(), mc.end());
    }
    for (double v : row.features) {
        if (!std::isfinite(v)) throw Error(ErrorKind::data, "non-finite feature value");
    }
    row.true_iou = label_iou(rec, gts);
    row.is_tp = row.true_iou >= kTruePositiveIou;
    return row;
}

}  // namespace metadetect
