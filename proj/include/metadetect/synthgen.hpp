#pragma once

#include "metadetect/io.hpp"

#include <cstdint>
#include <vector>

namespace metadetect {

/// Knobs of the synthetic detector. Candidate scores follow
/// clamp(score_slope * IoU(candidate, source GT) + score_offset + N(0, score_noise), 0, 1);
/// clutter candidates have no source object, so their IoU term is taken against the nearest GT.
struct SceneConfig {
    double image_rows = 256.0;
    double image_cols = 512.0;
    int num_images = 300;
    int min_objects = 1;
    int max_objects = 6;
    double min_object_size = 16.0;
    double max_object_size = 160.0;
    int num_classes = 3;

    double tp_cluster_mean = 4.0;       ///< true-object cluster size = 1 + Poisson(mean)
    double clutter_rate = 2.0;          ///< Poisson mean of clutter clusters per image
    double clutter_cluster_mean = 1.0;  ///< clutter cluster size = 1 + Poisson(mean)
    double jitter_sigma = 6.0;          ///< per-corner Gaussian jitter, pixels

    double score_slope = 0.8;
    double score_offset = 0.1;
    double score_noise = 0.15;
    double class_noise = 0.5;  ///< Gaussian noise on class logits

    int dropout_runs = 0;         ///< J
    double dropout_sigma = 2.0;   ///< corner jitter of dropout repeats, pixels
    double dropout_score_sigma = 0.03;

    std::uint64_t seed = 0;
};

/// Error(config) on invariant violations (negative sigmas or rates, empty extents, ...).
void validate(const SceneConfig& config);

struct SyntheticDump {
    std::vector<GroundTruthRow> ground_truth;
    std::vector<DumpRow> candidates;  ///< base rows of all images, then dropout rows
};

/// Deterministic given config.seed. Image ids are "img_000000", "img_000001", ...
SyntheticDump generate(const SceneConfig& config);

}  // namespace metadetect
