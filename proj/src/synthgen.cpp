#include "metadetect/synthgen.hpp"
#include "metadetect/error.hpp"
#include "metadetect/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/core.h>

namespace metadetect {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

struct ImageOutput {
    std::vector<GroundTruthRow> gts;
    std::vector<DumpRow> base;
    std::vector<DumpRow> dropout;
};

class ImageSynth {
public:
    ImageSynth(const SceneConfig& cfg, std::size_t index)
        : cfg_(cfg), rng_(splitmix64(cfg.seed ^ splitmix64(index))), image_id_(fmt::format("img_{:06d}", index)) {}

    ImageOutput run() {
        ImageOutput out;
        std::uniform_int_distribution<int> n_objects(cfg_.min_objects, cfg_.max_objects);
        std::uniform_int_distribution<int> pick_class(1, cfg_.num_classes);
        const int objects = n_objects(rng_);
        for (int k = 0; k < objects; ++k) out.gts.push_back({image_id_, {random_box(), pick_class(rng_)}});

        std::poisson_distribution<int> tp_extra(cfg_.tp_cluster_mean);
        for (const auto& g : out.gts) {
            const int size = 1 + (cfg_.tp_cluster_mean > 0.0 ? tp_extra(rng_) : 0);
            for (int m = 0; m < size; ++m) {
                const BBox box = jitter(g.gt.box, cfg_.jitter_sigma);
                out.base.push_back(candidate(box, score_for(iou(box, g.gt.box)), g.gt.class_index, 2.5));
            }
        }

        const int clutter = cfg_.clutter_rate > 0.0 ? std::poisson_distribution<int>(cfg_.clutter_rate)(rng_) : 0;
        std::poisson_distribution<int> clutter_extra(cfg_.clutter_cluster_mean);
        for (int k = 0; k < clutter; ++k) {
            const BBox source = clutter_box(out.gts);
            const int cls = pick_class(rng_);
            const int size = 1 + (cfg_.clutter_cluster_mean > 0.0 ? clutter_extra(rng_) : 0);
            for (int m = 0; m < size; ++m) {
                const BBox box = jitter(source, cfg_.jitter_sigma);
                out.base.push_back(candidate(box, score_for(nearest_gt_iou(box, out.gts)), cls, 1.0));
            }
        }

        std::normal_distribution<double> score_noise(0.0, 1.0);
        for (int run = 1; run <= cfg_.dropout_runs; ++run) {
            for (const auto& b : out.base) {
                DumpRow row = b;
                row.candidate.dropout_run = run;
                row.candidate.box = jitter(b.candidate.box, cfg_.dropout_sigma);
                row.candidate.score =
                    std::clamp(b.candidate.score + cfg_.dropout_score_sigma * score_noise(rng_), 0.0, 1.0);
                out.dropout.push_back(std::move(row));
            }
        }
        return out;
    }

private:
    BBox random_box() {
        std::uniform_real_distribution<double> size(cfg_.min_object_size, cfg_.max_object_size);
        const double h = std::min(size(rng_), cfg_.image_rows);
        const double w = std::min(size(rng_), cfg_.image_cols);
        std::uniform_real_distribution<double> r0(0.0, cfg_.image_rows - h);
        std::uniform_real_distribution<double> c0(0.0, cfg_.image_cols - w);
        const double r = r0(rng_), c = c0(rng_);
        return {r, r + h, c, c + w};
    }

    BBox clutter_box(const std::vector<GroundTruthRow>& gts) {
        BBox box = random_box();
        for (int attempt = 0; attempt < 50 && nearest_gt_iou(box, gts) > 0.1; ++attempt) box = random_box();
        return box;
    }

    static double nearest_gt_iou(const BBox& box, const std::vector<GroundTruthRow>& gts) {
        double best = 0.0;
        for (const auto& g : gts) best = std::max(best, iou(box, g.gt.box));
        return best;
    }

    /// Jitters each corner, then restores ordering, a 1 px minimum extent and the image bounds.
    BBox jitter(const BBox& b, double sigma) {
        std::normal_distribution<double> n(0.0, 1.0);
        double r0 = b.r_min + sigma * n(rng_), r1 = b.r_max + sigma * n(rng_);
        double c0 = b.c_min + sigma * n(rng_), c1 = b.c_max + sigma * n(rng_);
        if (r0 > r1) std::swap(r0, r1);
        if (c0 > c1) std::swap(c0, c1);
        auto fit = [](double& lo, double& hi, double extent) {
            lo = std::clamp(lo, 0.0, extent);
            hi = std::clamp(hi, 0.0, extent);
            if (hi - lo < 1.0) {
                hi = std::min(extent, lo + 1.0);
                lo = hi - 1.0;
            }
        };
        fit(r0, r1, cfg_.image_rows);
        fit(c0, c1, cfg_.image_cols);
        return {r0, r1, c0, c1};
    }

    double score_for(double quality) {
        std::normal_distribution<double> n(0.0, 1.0);
        return std::clamp(cfg_.score_slope * quality + cfg_.score_offset + cfg_.score_noise * n(rng_), 0.0, 1.0);
    }

    /// Softmax over noisy logits with a bonus on `cls`; `cls` is forced to be the argmax.
    std::vector<double> class_probs(int cls, double bonus) {
        std::normal_distribution<double> n(0.0, 1.0);
        std::vector<double> logits(static_cast<std::size_t>(cfg_.num_classes));
        for (auto& l : logits) l = cfg_.class_noise * n(rng_);
        const auto src = static_cast<std::size_t>(cls - 1);
        logits[src] += bonus;
        const auto top = static_cast<std::size_t>(std::distance(logits.begin(), std::max_element(logits.begin(), logits.end())));
        std::swap(logits[src], logits[top]);
        const double mx = logits[src];
        double sum = 0.0;
        for (auto& l : logits) sum += (l = std::exp(l - mx));
        for (auto& l : logits) l /= sum;
        return logits;
    }

    DumpRow candidate(const BBox& box, double score, int cls, double bonus) {
        DumpRow row;
        row.image_id = image_id_;
        row.candidate.box = box;
        row.candidate.score = score;
        row.candidate.probs = class_probs(cls, bonus);
        row.candidate.anchor_id = next_anchor_++;
        return row;
    }

    const SceneConfig& cfg_;
    std::mt19937_64 rng_;
    std::string image_id_;
    std::int64_t next_anchor_ = 0;
};

}  // namespace

void validate(const SceneConfig& c) {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw Error(ErrorKind::config, fmt::format("invalid scene config: {}", what));
    };
    require(c.image_rows > 1.0 && c.image_cols > 1.0, "image extent must exceed 1 pixel");
    require(c.num_images >= 0, "num_images must be >= 0");
    require(c.min_objects >= 0 && c.max_objects >= c.min_objects, "object count range");
    require(c.min_object_size >= 1.0 && c.max_object_size >= c.min_object_size, "object size range");
    require(c.num_classes >= 1, "num_classes must be >= 1");
    require(c.tp_cluster_mean >= 0.0 && c.clutter_rate >= 0.0 && c.clutter_cluster_mean >= 0.0, "rates must be >= 0");
    require(c.jitter_sigma >= 0.0 && c.score_noise >= 0.0 && c.class_noise >= 0.0 && c.dropout_sigma >= 0.0 &&
                c.dropout_score_sigma >= 0.0,
            "sigmas must be >= 0");
    require(c.dropout_runs >= 0, "dropout_runs must be >= 0");
}

SyntheticDump generate(const SceneConfig& config) {
    validate(config);
    const auto n = static_cast<std::size_t>(config.num_images);
    std::vector<ImageOutput> images(n);
    parallel_for(n, 0, [&](std::size_t i) { images[i] = ImageSynth(config, i).run(); });

    SyntheticDump dump;
    for (auto& img : images) {
        std::move(img.gts.begin(), img.gts.end(), std::back_inserter(dump.ground_truth));
        std::move(img.base.begin(), img.base.end(), std::back_inserter(dump.candidates));
    }
    for (auto& img : images) std::move(img.dropout.begin(), img.dropout.end(), std::back_inserter(dump.candidates));
    return dump;
}

}  // namespace metadetect
