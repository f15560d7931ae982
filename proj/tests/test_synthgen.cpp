#include "metadetect/dataset.hpp"
#include "metadetect/error.hpp"
#include "metadetect/synthgen.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <map>
#include <set>
#include <sstream>

using namespace metadetect;

namespace {

MetricTable extract(const SyntheticDump& dump, int classes, double t, bool dropout = false) {
    const auto images = group_by_image(dump.candidates, dump.ground_truth);
    return extract_table(images, ExtractOptions{classes, t, kDefaultNmsTau, dropout}, 1);
}

}  // namespace

TEST(Synthgen, DegenerateConfigGivesPerfectLabels) {
    SceneConfig cfg;
    cfg.num_images = 30;
    cfg.clutter_rate = 0.0;
    cfg.jitter_sigma = 0.0;
    cfg.score_noise = 0.0;
    const auto dump = generate(cfg);
    std::map<std::string, std::vector<BBox>> gt;
    for (const auto& g : dump.ground_truth) gt[g.image_id].push_back(g.gt.box);
    for (const auto& c : dump.candidates) {
        const auto& boxes = gt[c.image_id];
        EXPECT_TRUE(std::find(boxes.begin(), boxes.end(), c.candidate.box) != boxes.end());
    }
    const auto table = extract(dump, cfg.num_classes, 0.0);
    ASSERT_GT(table.size(), 0u);
    for (const auto& r : table.rows) EXPECT_EQ(r.true_iou, 1.0);
}

TEST(Synthgen, ScoreCorrelatesWithTrueIou) {
    SceneConfig cfg;
    cfg.num_images = 100;
    cfg.jitter_sigma = 15.0;
    const auto table = extract(generate(cfg), cfg.num_classes, 0.0);
    std::vector<double> s, y;
    const auto sc = column_indices(table.header, std::vector<std::string>{"s"})[0];
    for (const auto& r : table.rows) {
        s.push_back(r.features[sc]);
        y.push_back(r.true_iou);
    }
    EXPECT_GT(oracle::pearson(s, y), 0.3);
}

TEST(Synthgen, DropoutRunsCoverEveryAnchorOnce) {
    SceneConfig cfg;
    cfg.num_images = 20;
    cfg.dropout_runs = 3;
    const auto dump = generate(cfg);
    std::map<std::pair<std::string, std::int64_t>, std::multiset<int>> runs;
    for (const auto& c : dump.candidates) runs[{c.image_id, c.candidate.anchor_id}].insert(c.candidate.dropout_run);
    ASSERT_FALSE(runs.empty());
    for (const auto& [key, r] : runs) EXPECT_EQ(r, (std::multiset<int>{0, 1, 2, 3}));
    const auto table = extract(dump, cfg.num_classes, 0.1, true);
    EXPECT_EQ(table.header.size(), 66u + 3u);
}

TEST(Synthgen, DeterministicAndSeedSensitive) {
    SceneConfig cfg;
    cfg.num_images = 15;
    cfg.seed = 7;
    auto text = [](const SyntheticDump& d) {
        std::ostringstream o;
        write_candidates(o, d.candidates, 3);
        write_ground_truth(o, d.ground_truth);
        return o.str();
    };
    EXPECT_EQ(text(generate(cfg)), text(generate(cfg)));
    auto other = cfg;
    other.seed = 8;
    EXPECT_NE(text(generate(cfg)), text(generate(other)));
}

TEST(Synthgen, ValidationErrors) {
    for (auto mutate : {+[](SceneConfig& c) { c.jitter_sigma = -1; }, +[](SceneConfig& c) { c.image_rows = 0; },
                        +[](SceneConfig& c) { c.clutter_rate = -0.5; }, +[](SceneConfig& c) { c.num_classes = 0; },
                        +[](SceneConfig& c) { c.min_objects = 5, c.max_objects = 2; },
                        +[](SceneConfig& c) { c.dropout_runs = -1; }}) {
        SceneConfig cfg;
        mutate(cfg);
        EXPECT_THROW(validate(cfg), Error);
        EXPECT_THROW(generate(cfg), Error);
    }
}

TEST(Synthgen, DefaultDumpIsNonDegenerateAndTpClustersAreLarger) {
    const SceneConfig cfg;
    const auto dump = generate(cfg);
    std::set<std::string> ids;
    for (const auto& g : dump.ground_truth) ids.insert(g.image_id);
    EXPECT_EQ(ids.size(), 300u);
    const auto table = extract(dump, cfg.num_classes, 0.1);
    EXPECT_GT(table.size(), 1000u);
    EXPECT_LT(table.size(), 10000u);
    const auto n_col = column_indices(table.header, std::vector<std::string>{"N"})[0];
    double n_tp = 0, n_fp = 0;
    std::size_t tp = 0, fp = 0;
    for (const auto& r : table.rows) {
        (r.is_tp ? n_tp : n_fp) += r.features[n_col];
        ++(r.is_tp ? tp : fp);
    }
    ASSERT_GT(tp, 0u);
    ASSERT_GT(fp, 0u);
    EXPECT_GT(n_tp / static_cast<double>(tp), n_fp / static_cast<double>(fp));
}
