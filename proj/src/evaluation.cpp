#include "metadetect/evaluation.hpp"
#include "metadetect/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <fmt/core.h>

namespace metadetect {
namespace {

void check_pair(std::span<const double> a, std::span<const double> b, std::size_t min_size) {
    if (a.size() != b.size()) throw Error(ErrorKind::data, "input vectors have different lengths");
    if (a.size() < min_size) throw Error(ErrorKind::data, fmt::format("need at least {} values", min_size));
}

double mean_of(std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

Measured pearson(std::span<const double> x, std::span<const double> y) {
    check_pair(x, y, 2);
    const double mx = mean_of(x), my = mean_of(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) return {0.0, true};
    return {std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0), false};
}

Measured r2(std::span<const double> y_true, std::span<const double> y_pred) {
    check_pair(y_true, y_pred, 2);
    const double m = mean_of(y_true);
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        ss_res += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
        ss_tot += (y_true[i] - m) * (y_true[i] - m);
    }
    if (!(ss_tot > 0.0)) return {0.0, true};
    return {1.0 - ss_res / ss_tot, false};
}

double residual_std(std::span<const double> y_true, std::span<const double> y_pred) {
    check_pair(y_true, y_pred, 1);
    std::vector<double> res(y_true.size());
    for (std::size_t i = 0; i < res.size(); ++i) res[i] = y_true[i] - y_pred[i];
    const double m = mean_of(res);
    double ss = 0.0;
    for (double r : res) ss += (r - m) * (r - m);
    return std::sqrt(ss / static_cast<double>(res.size()));
}

double accuracy(std::span<const double> labels, std::span<const double> probs, double threshold) {
    check_pair(labels, probs, 1);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool predicted = probs[i] >= threshold;
        if (predicted == (labels[i] >= 0.5)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double auroc(std::span<const double> labels, std::span<const double> probs) {
    check_pair(labels, probs, 2);
    const std::size_t n = labels.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] < probs[b]; });

    // Sum of midranks of the positives.
    double rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t start = 0; start < n;) {
        std::size_t end = start;
        while (end < n && probs[order[end]] == probs[order[start]]) ++end;
        const double midrank = 0.5 * static_cast<double>(start + 1 + end);
        for (std::size_t k = start; k < end; ++k) {
            if (labels[order[k]] >= 0.5) {
                rank_sum += midrank;
                ++n_pos;
            }
        }
        start = end;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw Error(ErrorKind::data, "AUROC needs both classes present");
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

ApResult average_precision(std::span<const ScoredBox> predictions, std::span<const ScoredBox> ground_truth,
                           double iou_threshold, ApInterpolation interp) {
    ApResult res;
    res.gt_count = ground_truth.size();
    std::vector<std::size_t> order(predictions.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return predictions[a].score > predictions[b].score; });

    std::vector<bool> used(ground_truth.size(), false);
    std::size_t tp = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        const ScoredBox& p = predictions[order[k]];
        double best = -1.0;
        std::size_t best_gt = ground_truth.size();
        for (std::size_t g = 0; g < ground_truth.size(); ++g) {
            if (ground_truth[g].image_id != p.image_id) continue;
            const double v = iou(p.box, ground_truth[g].box);
            if (v > best) {
                best = v;
                best_gt = g;
            }
        }
        // A prediction whose best ground truth is already taken is a false positive.
        if (best_gt < ground_truth.size() && best >= iou_threshold && !used[best_gt]) {
            used[best_gt] = true;
            ++tp;
        }
        res.precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
        res.recall.push_back(res.gt_count ? static_cast<double>(tp) / static_cast<double>(res.gt_count) : 0.0);
    }
    res.matched = tp;
    if (res.gt_count == 0 || res.precision.empty()) return res;

    if (interp == ApInterpolation::eleven_point) {
        double sum = 0.0;
        for (int t = 0; t <= 10; ++t) {
            const double r = t / 10.0;
            double p_max = 0.0;
            for (std::size_t k = 0; k < res.recall.size(); ++k) {
                if (res.recall[k] >= r) p_max = std::max(p_max, res.precision[k]);
            }
            sum += p_max;
        }
        res.ap = sum / 11.0;
        return res;
    }

    // All-point: area under the precision envelope, anchored at recall 0.
    std::vector<double> rec{0.0}, prec{0.0};
    rec.insert(rec.end(), res.recall.begin(), res.recall.end());
    prec.insert(prec.end(), res.precision.begin(), res.precision.end());
    for (std::size_t k = prec.size() - 1; k-- > 0;) prec[k] = std::max(prec[k], prec[k + 1]);
    double ap = 0.0;
    for (std::size_t k = 1; k < rec.size(); ++k) ap += (rec[k] - rec[k - 1]) * prec[k];
    res.ap = ap;
    return res;
}

MapResult mean_average_precision(const std::map<int, std::vector<ScoredBox>>& predictions,
                                 const std::map<int, std::vector<ScoredBox>>& ground_truth, double iou_threshold,
                                 ApInterpolation interp) {
    MapResult out;
    std::set<int> classes;
    for (const auto& [c, _] : predictions) classes.insert(c);
    for (const auto& [c, _] : ground_truth) classes.insert(c);
    static const std::vector<ScoredBox> kNone;
    double sum = 0.0;
    for (int c : classes) {
        const auto gt_it = ground_truth.find(c);
        const auto& gts = gt_it == ground_truth.end() ? kNone : gt_it->second;
        if (gts.empty()) {
            out.excluded_classes.push_back(c);
            continue;
        }
        const auto p_it = predictions.find(c);
        const auto& preds = p_it == predictions.end() ? kNone : p_it->second;
        const double ap = average_precision(preds, gts, iou_threshold, interp).ap;
        out.per_class[c] = ap;
        sum += ap;
    }
    if (!out.per_class.empty()) out.map = sum / static_cast<double>(out.per_class.size());
    return out;
}

}  // namespace metadetect
