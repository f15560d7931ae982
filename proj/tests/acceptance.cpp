// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include "cli_helpers.hpp"
#include "metadetect/dataset.hpp"
#include "metadetect/detection.hpp"
#include "metadetect/evaluation.hpp"
#include "metadetect/io.hpp"
#include "metadetect/meta_model.hpp"
#include "metadetect/sweep.hpp"
#include "metadetect/synthgen.hpp"
#include "oracles.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>

using namespace metadetect;

namespace {

/// Collects the first failure message of a criterion.
struct Check {
    std::string failure;
    void expect(bool ok, const std::string& msg) {
        if (!ok && failure.empty()) failure = msg;
    }
};

struct Criterion {
    int id;
    std::string name;
    double limit_seconds;
    std::function<void(Check&)> body;
};

std::vector<ImageData> scene_images(const SceneConfig& cfg) {
    const auto dump = generate(cfg);
    return group_by_image(dump.candidates, dump.ground_truth);
}

void feature_cardinality(Check& c) {
    for (int classes : {1, 3, 20, 80}) {
        SceneConfig cfg;
        cfg.num_classes = classes;
        cfg.num_images = 5;
        cfg.dropout_runs = 2;
        cfg.seed = static_cast<std::uint64_t>(classes);
        const auto images = scene_images(cfg);
        for (bool dropout : {false, true}) {
            const std::size_t want = (dropout ? 66u : 46u) + static_cast<std::size_t>(classes);
            const auto table = extract_table(images, {classes, 0.1, kDefaultNmsTau, dropout}, 1);
            c.expect(table.header.size() == want, fmt::format("C={} header has {} names", classes, table.header.size()));
            c.expect(table.size() > 0, fmt::format("C={} produced no rows", classes));
            for (const auto& r : table.rows) {
                c.expect(r.features.size() == want, fmt::format("C={} row has {} values", classes, r.features.size()));
            }
            std::ostringstream csv;
            write_feature_table(csv, table);
            const std::string first = csv.str().substr(0, csv.str().find('\n'));
            c.expect(cli::split(first).size() == want + 3, fmt::format("C={} CSV header width", classes));
        }
    }
}

void threshold_schedules(Check& c) {
    std::vector<double> linear{0.01};
    for (int k = 1; k <= 32; ++k) linear.push_back(k / 40.0);
    c.expect(threshold_schedule(ScheduleKind::linear) == linear, "linear schedule differs");
    std::vector<double> log;
    for (int k = 1; k <= 12; ++k) log.push_back(std::strtod(fmt::format("1e-{}", k).c_str(), nullptr));
    c.expect(threshold_schedule(ScheduleKind::log) == log, "log schedule differs");
}

void nms_oracle(Check& c) {
    std::mt19937_64 rng(20240601);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto boxes = oracle::random_image(rng, 50, 3);
        const double tau = trial % 4 == 0 ? kDefaultNmsTau : std::uniform_real_distribution<double>(0.05, 0.95)(rng);
        const auto expected = oracle::brute_force_nms(boxes, tau);
        const auto got = nms(boxes, tau);
        if (got.size() != expected.size()) {
            c.expect(false, fmt::format("image {}: {} survivors, oracle {}", trial, got.size(), expected.size()));
            return;
        }
        for (std::size_t k = 0; k < got.size(); ++k) {
            std::vector<std::size_t> sup;
            for (const auto& s : got[k].suppressed) sup.push_back(static_cast<std::size_t>(s.anchor_id));
            std::sort(sup.begin(), sup.end());
            c.expect(static_cast<std::size_t>(got[k].survivor.anchor_id) == expected[k].survivor &&
                         sup == expected[k].suppressed,
                     fmt::format("image {} cluster {} differs", trial, k));
        }
    }
}

void iou_oracle(Check& c) {
    std::mt19937_64 rng(77);
    double worst = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const BBox a = oracle::random_box(rng), b = oracle::random_box(rng);
        const double v = iou(a, b);
        worst = std::max(worst, std::abs(v - oracle::box_iou(a, b)));
        c.expect(v == iou(b, a), "asymmetric IoU");
        c.expect(v >= 0.0 && v <= 1.0, "IoU out of [0,1]");
    }
    c.expect(worst <= 1e-12, fmt::format("max IoU deviation {:.3g}", worst));
}

void auroc_oracle(Check& c) {
    std::mt19937_64 rng(5);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 1000)(rng);
        const int levels = t % 4 == 0 ? 1 : (t % 4 == 1 ? 4 : (t % 4 == 2 ? 100 : 1 << 30));
        std::vector<double> labels(n), scores(n);
        for (std::size_t i = 0; i < n; ++i) {
            labels[i] = static_cast<double>(rng() % 2);
            scores[i] = static_cast<double>(std::uniform_int_distribution<int>(0, levels)(rng)) / levels;
        }
        labels[0] = 1.0;
        labels[n - 1] = 0.0;
        worst = std::max(worst, std::abs(auroc(labels, scores) - oracle::pairwise_auroc(labels, scores)));
    }
    c.expect(worst <= 1e-10, fmt::format("max AUROC deviation {:.3g}", worst));
}

void r2_pearson_oracle(Check& c) {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> n(0.0, 1.0);
    double worst = 0.0;
    for (int t = 0; t < 200; ++t) {
        const std::size_t len = 2 + static_cast<std::size_t>(t) * 5;
        std::vector<double> x(len), y(len), f(len);
        for (std::size_t i = 0; i < len; ++i) {
            x[i] = n(rng) * (1 + t % 7);
            y[i] = 0.3 * x[i] + n(rng);
            f[i] = y[i] + 0.5 * n(rng);
        }
        worst = std::max(worst, std::abs(pearson(x, y).value - oracle::pearson(x, y)));
        worst = std::max(worst, std::abs(r2(y, f).value - oracle::r_squared(y, f)));
    }
    c.expect(worst <= 1e-12, fmt::format("max deviation {:.3g}", worst));
}

void gb_monotone(Check& c) {
    for (int d = 0; d < 20; ++d) {
        std::mt19937_64 rng(900 + d);
        std::normal_distribution<double> n(0.0, 1.0);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const std::size_t rows = 60 + 25 * static_cast<std::size_t>(d), cols = 1 + static_cast<std::size_t>(d % 5);
        Matrix x(rows, cols);
        std::vector<double> yr(rows), yc(rows);
        for (std::size_t i = 0; i < rows; ++i) {
            for (double& v : x.row(i)) v = n(rng);
            yr[i] = std::clamp(0.5 + 0.25 * std::tanh(x(i, 0) * x(i, cols - 1)) + 0.2 * (u(rng) - 0.5), 0.0, 1.0);
            yc[i] = u(rng) < yr[i] ? 1.0 : 0.0;
        }
        for (Task task : {Task::regression, Task::classification}) {
            const auto m = fit_gbdt(x, task == Task::regression ? yr : yc, task);
            const auto& loss = std::get<TreeEnsemble>(m.params).train_loss;
            for (std::size_t t = 1; t < loss.size(); ++t) {
                c.expect(loss[t] <= loss[t - 1] * (1.0 + 1e-12),
                         fmt::format("dataset {} {} round {}: {} > {}", d, to_string(task), t, loss[t], loss[t - 1]));
            }
        }
    }
}

void gb_nonlinearity(Check& c) {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> mag(0.1, 1.0);
    std::bernoulli_distribution coin(0.5);
    Matrix x(400, 2);
    std::vector<double> y(400);
    for (std::size_t i = 0; i < 400; ++i) {
        x(i, 0) = (coin(rng) ? 1 : -1) * mag(rng);
        x(i, 1) = (coin(rng) ? 1 : -1) * mag(rng);
        y[i] = (x(i, 0) > 0) != (x(i, 1) > 0) ? 1.0 : 0.0;
    }
    const double gb = oracle::r_squared(y, predict(fit_gbdt(x, y, Task::regression), x));
    const double lr = oracle::r_squared(y, predict(fit_linear(x, y, Task::regression), x));
    c.expect(gb > 0.9, fmt::format("GB train R2 {:.4f}", gb));
    c.expect(lr < 0.2, fmt::format("LR train R2 {:.4f}", lr));
}

void nn_gradient(Check& c) {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix x(5, 6);
    for (std::size_t i = 0; i < 5; ++i) {
        for (double& v : x.row(i)) v = n(rng);
    }
    const std::vector<double> yc{1, 0, 0, 1, 1}, yr{0.8, 0.2, 0.4, 0.9, 0.6};
    const std::vector<int> hidden{50, 50};
    double worst = 0.0;
    for (int probe = 0; probe < 10; ++probe) {
        const Task task = probe % 2 == 0 ? Task::classification : Task::regression;
        const auto& y = task == Task::classification ? yc : yr;
        NeuralNet net(6, hidden, 500 + static_cast<std::uint64_t>(probe));
        auto params = net.parameters();
        std::normal_distribution<double> nudge(0.0, 0.05);
        for (double& p : params) p += nudge(rng);
        net.set_parameters(params);
        std::vector<double> grad;
        net.loss_and_gradient(x, y, task, grad);
        std::uniform_int_distribution<std::size_t> pick(0, params.size() - 1);
        for (int k = 0; k < 40; ++k) {
            const std::size_t j = pick(rng);
            const double h = 1e-6;
            auto plus = params, minus = params;
            plus[j] += h;
            minus[j] -= h;
            NeuralNet a = net, b = net;
            a.set_parameters(plus);
            b.set_parameters(minus);
            const double fd = (a.loss(x, y, task) - b.loss(x, y, task)) / (2 * h);
            worst = std::max(worst, std::abs(fd - grad[j]) / std::max({std::abs(fd), std::abs(grad[j]), 1e-6}));
        }
    }
    c.expect(worst < 1e-4, fmt::format("max relative error {:.3g}", worst));
}

void smote_contract(Check& c) {
    SceneConfig cfg;
    cfg.num_images = 80;
    const auto table = extract_table(scene_images(cfg), {3, 0.1, kDefaultNmsTau, false}, 1);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto train = split_resample(table, seed).first;
        const auto out = smote(train, kDefaultSmoteK, seed);
        const std::size_t tp = out.count_tp();
        c.expect(tp * 2 == out.size(), fmt::format("seed {}: {} TP of {}", seed, tp, out.size()));
        for (std::size_t i = 0; i < train.size(); ++i) {
            c.expect(out.rows[i].features == train.rows[i].features && out.rows[i].is_tp == train.rows[i].is_tp &&
                         !out.rows[i].synthetic(),
                     "original row modified");
        }
        const bool minority = train.count_tp() * 2 < train.size();
        for (std::size_t i = train.size(); i < out.size(); ++i) {
            const auto& r = out.rows[i];
            if (!r.synthetic()) {
                c.expect(false, "appended row without origin");
                continue;
            }
            const auto& a = train.rows[r.origin->sample];
            const auto& b = train.rows[r.origin->neighbour];
            c.expect(r.is_tp == minority && a.is_tp == minority && b.is_tp == minority, "synthetic row label");
            for (std::size_t k = 0; k < r.features.size(); ++k) {
                c.expect(r.features[k] >= std::min(a.features[k], b.features[k]) &&
                             r.features[k] <= std::max(a.features[k], b.features[k]),
                         fmt::format("row {} feature {} outside its parents", i, train.header[k]));
            }
        }
    }
}

void end_to_end(Check& c) {
    SweepConfig cfg;
    cfg.num_classes = 3;
    cfg.thresholds = {0.1};
    cfg.runs = 10;
    cfg.families = {ModelFamily::gbdt};
    cfg.feature_sets = {FeatureSet::baseline, FeatureSet::metadetect};
    const auto report = sweep(scene_images(SceneConfig{}), cfg);
    for (const char* metric : {"auroc", "r2"}) {
        const auto* base = report.find(0.1, ModelFamily::gbdt, FeatureSet::baseline, metric);
        const auto* meta = report.find(0.1, ModelFamily::gbdt, FeatureSet::metadetect, metric);
        if (!base || !meta || base->values.size() != 10 || meta->values.size() != 10) {
            c.expect(false, fmt::format("{} cells missing", metric));
            continue;
        }
        int wins = 0;
        for (std::size_t r = 0; r < 10; ++r) wins += meta->values[r] > base->values[r];
        fmt::print("      {}: baseline {:.4f}(±{:.4f}) metadetect {:.4f}(±{:.4f}), metadetect wins {}/10\n", metric,
                   base->mean, base->std, meta->mean, meta->std, wins);
        c.expect(meta->mean > base->mean, fmt::format("{} mean not improved", metric));
        c.expect(wins >= 9, fmt::format("{}: MetaDetect wins only {}/10 runs", metric, wins));
    }
}

bool is_score_feature(const std::string& n) { return n == "s" || n.rfind("s_", 0) == 0; }

bool is_geometry_feature(const std::string& n) {
    for (const char* p : {"r_min", "r_max", "c_min", "c_max", "d", "g", "rd"}) {
        const std::string prefix(p);
        if (n == prefix || n.rfind(prefix + "_", 0) == 0) return true;
    }
    return false;
}

void correlation_ordering(Check& c) {
    cli::ScratchDir dir("acc_corr");
    c.expect(cli::run("synth --out " + dir.path().string()) == 0, "synth failed");
    c.expect(cli::run("extract --candidates " + (dir / "candidates.csv") + " --groundtruth " +
                      (dir / "groundtruth.csv") + " --classes 3 --threshold 0.1 --out " + (dir / "t.csv")) == 0,
             "extract failed");
    c.expect(cli::run("corr --table " + (dir / "t.csv") + " --out " + (dir / "c.csv")) == 0, "corr failed");
    const auto rows = cli::lines(dir / "c.csv");
    std::size_t worst_score_rank = 0, best_geometry_rank = rows.size();
    double s_r = 0.0;
    std::string best_geometry;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto f = cli::split(rows[i]);
        if (f[1] == "s") s_r = std::stod(f[2]);
        if (is_score_feature(f[1])) worst_score_rank = std::max(worst_score_rank, i);
        if (is_geometry_feature(f[1]) && i < best_geometry_rank) {
            best_geometry_rank = i;
            best_geometry = f[1];
        }
    }
    fmt::print("      r(s) = {:.4f}; lowest score feature rank {}, best geometry feature {} at rank {}\n", s_r,
               worst_score_rank, best_geometry, best_geometry_rank);
    c.expect(worst_score_rank > 0 && worst_score_rank < best_geometry_rank,
             "a geometry feature outranks a score feature");
    c.expect(s_r >= 0.5, fmt::format("r(s) = {:.4f}", s_r));
}

void determinism(Check& c) {
    cli::ScratchDir a("acc_det_a"), b("acc_det_b");
    for (const auto* dir : {&a, &b}) {
        const std::string d = dir->path().string();
        const std::string cand = *dir / "data/candidates.csv", gt = *dir / "data/groundtruth.csv";
        const std::vector<std::string> cmds{
            "synth --out " + d + "/data --images 60 --seed 11 --dropout-runs 2",
            "extract --candidates " + cand + " --groundtruth " + gt + " --classes 3 --dropout --out " + d + "/t.csv",
            "train --table " + d + "/t.csv --out " + d + "/models --models lr,gb,nn --features baseline,metadetect,"
                "metadetect-dropout --seed 3",
            "eval --table " + d + "/t.csv --model " + d + "/models/gb_regression_metadetect.model --model " + d +
                "/models/nn_classification_metadetect-dropout.model --out " + d + "/eval.csv",
            "sweep --candidates " + cand + " --groundtruth " + gt + " --classes 3 --threshold 0.1,0.3 --runs 3 "
                "--models lr,gb --scatter --out " + d + "/sweep",
            "corr --table " + d + "/t.csv --out " + d + "/corr.csv"};
        for (const auto& cmd : cmds) c.expect(cli::run(cmd) == 0, "command failed: " + cmd);
    }
    std::size_t compared = 0;
    for (const auto& entry : cli::fs::recursive_directory_iterator(a.path())) {
        if (!entry.is_regular_file()) continue;
        const auto rel = cli::fs::relative(entry.path(), a.path());
        const auto other = b.path() / rel;
        c.expect(cli::fs::exists(other), "missing in second run: " + rel.string());
        c.expect(cli::slurp(entry.path()) == cli::slurp(other), "differs between runs: " + rel.string());
        ++compared;
    }
    fmt::print("      {} output files compared byte-for-byte\n", compared);
    c.expect(compared >= 15, fmt::format("only {} files produced", compared));
}

void ap_sanity(Check& c) {
    const std::vector<ScoredBox> gt{{"a", {0, 10, 0, 10}, 1}, {"b", {5, 25, 5, 25}, 1}};
    const std::vector<ScoredBox> perfect{{"a", {0, 10, 0, 10}, 0.8}, {"b", {5, 25, 5, 25}, 0.6}};
    const std::vector<ScoredBox> disjoint{{"a", {40, 50, 40, 50}, 0.8}, {"b", {60, 70, 60, 70}, 0.6}};
    c.expect(average_precision(perfect, gt).ap == 1.0, "perfect AP != 1");
    c.expect(average_precision(disjoint, gt).ap == 0.0, "disjoint AP != 0");
    // One GT; 0.9 misses, 0.5 matches with IoU 0.8 (10x10 box vs 10x8 inside it).
    const std::vector<ScoredBox> one{{"a", {0, 10, 0, 10}, 1}};
    const std::vector<ScoredBox> half{{"a", {50, 60, 50, 60}, 0.9}, {"a", {0, 10, 0, 8}, 0.5}};
    const double iou_match = oracle::box_iou(half[1].box, one[0].box);
    c.expect(std::abs(iou_match - 0.8) < 1e-15, "construction IoU is not 0.8");
    const auto r = average_precision(half, one);
    c.expect(r.ap == 0.5, fmt::format("half-recall AP {}", r.ap));
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "feature cardinality 46+C / 66+C for C in {1,3,20,80}", 1.0, feature_cardinality},
        {2, "threshold schedules (33 linear, 12 log)", 1.0, threshold_schedules},
        {3, "NMS matches brute force on 1000 random images", 10.0, nms_oracle},
        {4, "IoU matches area oracle on 1e5 pairs", 5.0, iou_oracle},
        {5, "AUROC matches pairwise Mann-Whitney on 100 instances", 30.0, auroc_oracle},
        {6, "R2 and Pearson match definitional sums", 1.0, r2_pearson_oracle},
        {7, "GB training loss non-increasing on 20 datasets", 60.0, gb_monotone},
        {8, "GB fits XOR (R2 > 0.9), linear does not (R2 < 0.2)", 30.0, gb_nonlinearity},
        {9, "NN backprop matches central differences", 10.0, nn_gradient},
        {10, "SMOTE balance, betweenness, originals untouched", 5.0, smote_contract},
        {11, "MetaDetect beats score baseline (GB, t=0.1, 10 runs)", 300.0, end_to_end},
        {12, "score features outrank geometry features, r(s) >= 0.5", 30.0, correlation_ordering},
        {13, "every CLI command reproduces its outputs byte-for-byte", 60.0, determinism},
        {14, "AP examples 1.0 / 0.0 / 0.5", 1.0, ap_sanity},
    };
    int failed = 0;
    for (const auto& cr : criteria) {
        Check check;
        const auto start = std::chrono::steady_clock::now();
        try {
            cr.body(check);
        } catch (const std::exception& e) {
            check.expect(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        check.expect(secs <= cr.limit_seconds, fmt::format("took {:.2f} s, limit {} s", secs, cr.limit_seconds));
        const bool ok = check.failure.empty();
        failed += !ok;
        fmt::print("{} [{:2}] {} ({:.2f} s){}\n", ok ? "PASS" : "FAIL", cr.id, cr.name, secs,
                   ok ? "" : " -- " + check.failure);
        std::fflush(stdout);
    }
    fmt::print("{}/{} criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
    return failed == 0 ? 0 : 1;
}
