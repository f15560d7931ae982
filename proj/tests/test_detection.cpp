#include "metadetect/detection.hpp"
#include "metadetect/error.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace metadetect;

namespace {

CandidateBox make(BBox box, double score, int cls = 1, int num_classes = 2, std::int64_t anchor = 0, int run = 0) {
    CandidateBox c;
    c.box = box;
    c.score = score;
    c.probs.assign(static_cast<std::size_t>(num_classes), 0.0);
    c.probs[static_cast<std::size_t>(cls - 1)] = 1.0;
    c.anchor_id = anchor;
    c.dropout_run = run;
    return c;
}

std::vector<double> scores_of(const std::vector<CandidateBox>& v) {
    std::vector<double> s;
    for (const auto& c : v) s.push_back(c.score);
    return s;
}

}  // namespace

TEST(PredictedClass, ArgmaxWithLowestIndexTies) {
    CandidateBox c;
    c.probs = {0.2, 0.4, 0.4};
    EXPECT_EQ(c.predicted_class(), 2);
    c.probs = {0.5, 0.5};
    EXPECT_EQ(c.predicted_class(), 1);
}

TEST(Validate, RejectsBadCandidates) {
    EXPECT_NO_THROW(validate(make({0, 1, 0, 1}, 0.5), 2));
    EXPECT_THROW(validate(make({0, 1, 0, 1}, 1.5), 2), Error);
    EXPECT_THROW(validate(make({0, 1, 0, 1}, 0.5), 3), Error);
    auto c = make({0, 1, 0, 1}, 0.5);
    c.probs = {0.6, 0.6};
    EXPECT_THROW(validate(c, 2), Error);
    c.probs = {0.5, 0.5004};
    EXPECT_NO_THROW(validate(c, 2));
    EXPECT_THROW(validate(GroundTruthBox{{0, 1, 0, 1}, 3}, 2), Error);
}

TEST(ScoreFilter, Examples) {
    const std::vector<CandidateBox> c{make({0, 1, 0, 1}, 0.9), make({0, 1, 0, 1}, 0.3), make({0, 1, 0, 1}, 0.01)};
    EXPECT_EQ(scores_of(score_filter(c, 0.5)), (std::vector<double>{0.9}));
    EXPECT_EQ(score_filter(c, 0.0).size(), 3u);
    EXPECT_EQ(scores_of(score_filter(std::vector{make({0, 1, 0, 1}, 0.5)}, 0.5)), (std::vector<double>{0.5}));
}

TEST(ScoreFilter, IgnoresDropoutRowsAndIsIdempotent) {
    const std::vector<CandidateBox> c{make({0, 1, 0, 1}, 0.9), make({0, 1, 0, 1}, 0.95, 1, 2, 0, 1),
                                      make({0, 1, 0, 1}, 0.4)};
    const auto once = score_filter(c, 0.3);
    EXPECT_EQ(scores_of(once), (std::vector<double>{0.9, 0.4}));
    EXPECT_EQ(score_filter(once, 0.3), once);
}

TEST(Nms, SingleBox) {
    const auto out = nms(std::vector{make({0, 10, 0, 10}, 0.7)}, 0.45);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_TRUE(out[0].suppressed.empty());
    EXPECT_EQ(out[0].cluster_size(), 1u);
}

TEST(Nms, EmptyInput) { EXPECT_TRUE(nms(std::vector<CandidateBox>{}, 0.45).empty()); }

TEST(Nms, PairAboveTauMatchesOracle) {
    // IoU = 60/100 = 0.6: inter (0..10)x(0..6)... constructed directly.
    const BBox a{0, 10, 0, 10};
    const BBox b{0, 10, 2.5, 12.5};  // inter 75, union 125 -> 0.6
    ASSERT_NEAR(oracle::box_iou(a, b), 0.6, 1e-15);
    const std::vector<CandidateBox> in{make(b, 0.8), make(a, 0.9)};
    const auto expected = oracle::brute_force_nms(in, 0.45);
    ASSERT_EQ(expected.size(), 1u);
    const auto out = nms(in, 0.45);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].survivor.score, 0.9);
    ASSERT_EQ(out[0].suppressed.size(), 1u);
    EXPECT_EQ(out[0].suppressed[0].score, 0.8);
}

TEST(Nms, DifferentClassesBothSurvive) {
    const std::vector<CandidateBox> in{make({0, 10, 0, 10}, 0.9, 1), make({0, 10, 0, 10}, 0.8, 2)};
    const auto out = nms(in, 0.45);
    EXPECT_EQ(out.size(), 2u);
}

TEST(Nms, InclusiveAtTau) {
    const BBox a{0, 10, 0, 10};
    const BBox b{0, 10, 2.5, 12.5};
    EXPECT_EQ(nms(std::vector{make(a, 0.9), make(b, 0.8)}, 0.6).size(), 1u);
    EXPECT_EQ(nms(std::vector{make(a, 0.9), make(b, 0.8)}, 0.61).size(), 2u);
}

TEST(Nms, TiesGoToLowerIndex) {
    const std::vector<CandidateBox> in{make({0, 10, 0, 10}, 0.5, 1, 2, 7), make({0, 10, 0, 10}, 0.5, 1, 2, 3)};
    const auto out = nms(in, 0.45);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].survivor.anchor_id, 7);
}

TEST(NmsProperty, AgreesWithBruteForceAndPartitionsInput) {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto boxes = oracle::random_image(rng, 50, 3);
        const double tau = std::uniform_real_distribution<double>(0.05, 1.0)(rng);
        const auto expected = oracle::brute_force_nms(boxes, tau);
        const auto got = nms(boxes, tau);
        ASSERT_EQ(got.size(), expected.size());
        std::vector<int> seen(boxes.size(), 0);
        for (std::size_t k = 0; k < got.size(); ++k) {
            EXPECT_EQ(static_cast<std::size_t>(got[k].survivor.anchor_id), expected[k].survivor);
            std::vector<std::size_t> sup;
            for (const auto& s : got[k].suppressed) {
                sup.push_back(static_cast<std::size_t>(s.anchor_id));
                EXPECT_EQ(s.predicted_class(), got[k].survivor.predicted_class());
                EXPECT_GE(iou(got[k].survivor.box, s.box), tau);
                EXPECT_LE(s.score, got[k].survivor.score);
            }
            std::sort(sup.begin(), sup.end());
            EXPECT_EQ(sup, expected[k].suppressed);
            ++seen[static_cast<std::size_t>(got[k].survivor.anchor_id)];
            for (auto i : sup) ++seen[i];
        }
        EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
    }
}

TEST(AttachDropout, NoDropoutRuns) {
    std::vector<CandidateBox> all{make({0, 10, 0, 10}, 0.9, 1, 2, 7)};
    auto recs = nms(score_filter(all, 0.1), 0.45);
    attach_dropout(recs, all);
    EXPECT_TRUE(recs[0].dropout_obs.empty());
}

TEST(AttachDropout, JoinsAllRunsOfAnchorInRunOrder) {
    std::vector<CandidateBox> all{make({0, 10, 0, 10}, 0.9, 1, 2, 7), make({50, 60, 50, 60}, 0.8, 1, 2, 8)};
    for (int run = 10; run >= 1; --run) all.push_back(make({0, 10, 0, 10}, 0.1 * run, 1, 2, 7, run));
    all.push_back(make({50, 60, 50, 60}, 0.5, 1, 2, 9, 1));
    auto recs = nms(score_filter(all, 0.1), 0.45);
    attach_dropout(recs, all);
    ASSERT_EQ(recs.size(), 2u);
    ASSERT_EQ(recs[0].dropout_obs.size(), 10u);
    for (int k = 0; k < 10; ++k) EXPECT_EQ(recs[0].dropout_obs[static_cast<std::size_t>(k)].dropout_run, k + 1);
    EXPECT_TRUE(recs[1].dropout_obs.empty());
}

TEST(AttachDropout, PartialRunsAreNotPadded) {
    std::vector<CandidateBox> all{make({0, 10, 0, 10}, 0.9, 1, 2, 4), make({0, 10, 0, 10}, 0.7, 1, 2, 4, 3),
                                  make({0, 10, 0, 10}, 0.6, 1, 2, 4, 1)};
    auto recs = nms(score_filter(all, 0.1), 0.45);
    attach_dropout(recs, all);
    ASSERT_EQ(recs[0].dropout_obs.size(), 2u);
    EXPECT_EQ(recs[0].dropout_obs[0].dropout_run, 1);
    EXPECT_EQ(recs[0].dropout_obs[1].dropout_run, 3);
}

TEST(AttachDropout, DuplicateAnchorRunRejected) {
    std::vector<CandidateBox> all{make({0, 10, 0, 10}, 0.9, 1, 2, 4), make({0, 10, 0, 10}, 0.7, 1, 2, 4, 2),
                                  make({0, 10, 0, 10}, 0.6, 1, 2, 4, 2)};
    auto recs = nms(score_filter(all, 0.1), 0.45);
    try {
        attach_dropout(recs, all);
        FAIL() << "expected a format error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::format);
    }
}

TEST(ThresholdSchedule, Linear) {
    const auto s = threshold_schedule(ScheduleKind::linear);
    ASSERT_EQ(s.size(), 33u);
    EXPECT_EQ(s[0], 0.01);
    EXPECT_EQ(s[1], 0.025);
    EXPECT_EQ(s[32], 0.8);
    EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
    EXPECT_TRUE(std::adjacent_find(s.begin(), s.end()) == s.end());
}

TEST(ThresholdSchedule, Log) {
    const auto s = threshold_schedule(ScheduleKind::log);
    ASSERT_EQ(s.size(), 12u);
    EXPECT_EQ(s[0], 1e-1);
    EXPECT_EQ(s[11], 1e-12);
    for (std::size_t k = 1; k < s.size(); ++k) EXPECT_LT(s[k], s[k - 1]);
}
