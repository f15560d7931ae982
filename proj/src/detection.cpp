#include "metadetect/detection.hpp"
#include "metadetect/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <utility>

#include <fmt/core.h>

namespace metadetect {

int CandidateBox::predicted_class() const noexcept {
    if (probs.empty()) return 0;
    const auto it = std::max_element(probs.begin(), probs.end());
    return static_cast<int>(std::distance(probs.begin(), it)) + 1;
}

void validate(const CandidateBox& c, int num_classes) {
    if (!is_valid(c.box)) throw Error(ErrorKind::schema, "candidate box has unordered or non-finite extents");
    if (!(c.score >= 0.0 && c.score <= 1.0)) {
        throw Error(ErrorKind::schema, fmt::format("candidate score {} outside [0,1]", c.score));
    }
    if (static_cast<int>(c.probs.size()) != num_classes) {
        throw Error(ErrorKind::schema,
                    fmt::format("candidate has {} class probabilities, expected {}", c.probs.size(), num_classes));
    }
    double sum = 0.0;
    for (double p : c.probs) {
        if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::schema, fmt::format("class probability {} outside [0,1]", p));
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-3) {
        throw Error(ErrorKind::schema, fmt::format("class probabilities sum to {}, expected 1", sum));
    }
    if (c.dropout_run < 0) throw Error(ErrorKind::schema, "negative dropout_run");
}

void validate(const GroundTruthBox& g, int num_classes) {
    if (!is_valid(g.box)) throw Error(ErrorKind::schema, "ground-truth box has unordered or non-finite extents");
    if (g.class_index < 1 || g.class_index > num_classes) {
        throw Error(ErrorKind::schema, fmt::format("ground-truth class {} outside [1,{}]", g.class_index, num_classes));
    }
}

std::vector<CandidateBox> score_filter(std::span<const CandidateBox> candidates, double t) {
    std::vector<CandidateBox> out;
    for (const auto& c : candidates) {
        if (c.dropout_run == 0 && c.score >= t) out.push_back(c);
    }
    return out;
}

std::vector<SurvivorRecord> nms(std::span<const CandidateBox> filtered, double tau,
                                const std::string& image_id) {
    const std::size_t n = filtered.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return filtered[a].score > filtered[b].score;
    });

    std::vector<int> classes(n);
    for (std::size_t i = 0; i < n; ++i) classes[i] = filtered[i].predicted_class();

    std::vector<bool> removed(n, false);
    std::vector<SurvivorRecord> out;
    for (std::size_t pos = 0; pos < n; ++pos) {
        const std::size_t i = order[pos];
        if (removed[i]) continue;
        removed[i] = true;
        SurvivorRecord rec;
        rec.image_id = image_id;
        rec.survivor = filtered[i];
        for (std::size_t later = pos + 1; later < n; ++later) {
            const std::size_t j = order[later];
            if (removed[j] || classes[j] != classes[i]) continue;
            if (iou(filtered[i].box, filtered[j].box) >= tau) {
                removed[j] = true;
                rec.suppressed.push_back(filtered[j]);
            }
        }
        out.push_back(std::move(rec));
    }
    return out;
}

void attach_dropout(std::vector<SurvivorRecord>& records, std::span<const CandidateBox> all_candidates) {
    std::map<std::pair<std::int64_t, int>, const CandidateBox*> by_key;
    for (const auto& c : all_candidates) {
        auto [it, inserted] = by_key.emplace(std::pair{c.anchor_id, c.dropout_run}, &c);
        if (!inserted) {
            throw Error(ErrorKind::format, fmt::format("duplicate (anchor_id, dropout_run) = ({}, {}) in candidate dump",
                                                       c.anchor_id, c.dropout_run));
        }
    }
    for (auto& rec : records) {
        rec.dropout_obs.clear();
        const auto first = by_key.lower_bound({rec.survivor.anchor_id, 1});
        for (auto it = first; it != by_key.end() && it->first.first == rec.survivor.anchor_id; ++it) {
            rec.dropout_obs.push_back(*it->second);
        }
    }
}

std::vector<double> threshold_schedule(ScheduleKind kind) {
    if (kind == ScheduleKind::log) {
        return {1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10, 1e-11, 1e-12};
    }
    std::vector<double> out{0.01};
    for (int k = 1; k <= 32; ++k) out.push_back(k / 40.0);
    return out;
}

}  // namespace metadetect
