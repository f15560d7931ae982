// metadetect: box-wise uncertainty metrics and meta classification /
// regression for object detector outputs.

#include "metadetect/dataset.hpp"
#include "metadetect/error.hpp"
#include "metadetect/evaluation.hpp"
#include "metadetect/io.hpp"
#include "metadetect/meta_model.hpp"
#include "metadetect/sweep.hpp"
#include "metadetect/synthgen.hpp"

#include <CLI11.hpp>
#include <fmt/core.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

namespace fs = std::filesystem;
using namespace metadetect;

namespace {

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, fmt::format("cannot write '{}'", path.string()));
    return out;
}

template <typename T, typename Parse>
std::vector<T> parse_all(const std::vector<std::string>& names, Parse parse) {
    std::vector<T> out;
    for (const auto& n : names) {
        const T v = parse(n);
        if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
    }
    return out;
}

std::string feature_set_label(const MetaModel& m) {
    if (m.header == std::vector<std::string>{"s"}) return "baseline";
    if (std::find(m.header.begin(), m.header.end(), "s_mean_mc") != m.header.end()) return "metadetect-dropout";
    return "metadetect";
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    std::string out;
    SceneConfig scene;
};

void run_synth(const SynthArgs& a) {
    const auto dump = generate(a.scene);
    auto cand = open_out(fs::path(a.out) / "candidates.csv");
    write_candidates(cand, dump.candidates, a.scene.num_classes);
    auto gt = open_out(fs::path(a.out) / "groundtruth.csv");
    write_ground_truth(gt, dump.ground_truth);
}

struct ExtractArgs {
    std::string candidates, groundtruth, out;
    int classes = 1;
    double tau = kDefaultNmsTau;
    double threshold = 0.1;
    bool dropout = false;
    unsigned threads = 0;
};

void run_extract(const ExtractArgs& a) {
    const auto dump = read_candidates_file(a.candidates, a.classes);
    const auto gts = read_ground_truth_file(a.groundtruth, a.classes);
    const auto images = group_by_image(dump, gts);
    const auto table = extract_table(images, {a.classes, a.threshold, a.tau, a.dropout}, a.threads);
    auto out = open_out(a.out);
    write_feature_table(out, table);
}

struct TrainArgs {
    std::string table, out;
    std::vector<std::string> features{"baseline", "metadetect"};
    std::vector<std::string> models{"gb"};
    std::vector<std::string> tasks{"classification", "regression"};
    std::uint64_t seed = 0;
    int smote_k = kDefaultSmoteK;
};

void run_train(const TrainArgs& a) {
    const MetricTable table = read_feature_table_file(a.table);
    const auto [train, val] = split_resample(table, a.seed);
    const auto families = parse_all<ModelFamily>(a.models, parse_family);
    const auto sets = parse_all<FeatureSet>(a.features, parse_feature_set);
    const auto tasks = parse_all<Task>(a.tasks, parse_task);
    for (auto fs_kind : sets) {
        if (needs_dropout(fs_kind) && !table.dropout_enabled) {
            throw Error(ErrorKind::config, "metadetect-dropout needs a feature table extracted with --dropout");
        }
    }

    fs::create_directories(a.out);
    auto manifest = open_out(fs::path(a.out) / "manifest.csv");
    manifest << "file,family,task,feature_set,seed,train_rows,smote_k\n";
    for (auto family : families) {
        for (auto fs_kind : sets) {
            for (auto task : tasks) {
                const MetaModel model = train_model(train, family, fs_kind, task, a.seed, a.smote_k);
                const std::string file =
                    fmt::format("{}_{}_{}.model", to_string(family), to_string(task), to_string(fs_kind));
                auto out = open_out(fs::path(a.out) / file);
                save_model(model, out);
                manifest << fmt::format("{},{},{},{},{},{},{}\n", file, to_string(family), to_string(task),
                                        to_string(fs_kind), a.seed, train.size(),
                                        task == Task::classification ? a.smote_k : 0);
            }
        }
    }
}

struct EvalArgs {
    std::string table, out;
    std::vector<std::string> models;
    std::string split = "val";
    bool allow_train_eval = false;
};

void run_eval(const EvalArgs& a) {
    if (a.split != "val" && !a.allow_train_eval) {
        throw Error(ErrorKind::config,
                    fmt::format("evaluating on the '{}' split includes training rows; pass --allow-train-eval", a.split));
    }
    const MetricTable table = read_feature_table_file(a.table);
    auto out = open_out(a.out);
    out << "family,feature_set,task,metric,value\n";
    for (const auto& path : a.models) {
        const MetaModel model = load_model(path);
        MetricTable rows;
        if (a.split == "all") {
            rows = table;
        } else {
            auto [train, val] = split_resample(table, model.train_seed);
            rows = a.split == "train" ? std::move(train) : std::move(val);
        }
        for (const auto& [metric, value] : evaluate_model(model, rows)) {
            out << fmt::format("{},{},{},{},{}\n", to_string(model.family), feature_set_label(model),
                               to_string(model.task), metric, format_number(value));
        }
    }
}

struct SweepArgs {
    std::string candidates, groundtruth, out;
    int classes = 1;
    double tau = kDefaultNmsTau;
    std::string schedule = "linear";
    std::vector<double> thresholds;
    std::vector<std::string> features{"baseline", "metadetect"};
    std::vector<std::string> models{"gb"};
    std::vector<std::string> tasks{"classification", "regression"};
    int runs = 10;
    std::uint64_t seed = 0;
    int smote_k = kDefaultSmoteK;
    bool scatter = false;
    unsigned threads = 0;
};

void run_sweep(const SweepArgs& a) {
    const auto dump = read_candidates_file(a.candidates, a.classes);
    const auto gts = read_ground_truth_file(a.groundtruth, a.classes);
    const auto images = group_by_image(dump, gts);

    SweepConfig cfg;
    cfg.num_classes = a.classes;
    cfg.tau = a.tau;
    if (!a.thresholds.empty()) {
        cfg.thresholds = a.thresholds;
    } else if (a.schedule == "linear" || a.schedule == "log") {
        cfg.thresholds = threshold_schedule(a.schedule == "log" ? ScheduleKind::log : ScheduleKind::linear);
    } else {
        throw Error(ErrorKind::config, fmt::format("unknown schedule '{}' (expected linear or log)", a.schedule));
    }
    cfg.families = parse_all<ModelFamily>(a.models, parse_family);
    cfg.feature_sets = parse_all<FeatureSet>(a.features, parse_feature_set);
    cfg.tasks = parse_all<Task>(a.tasks, parse_task);
    cfg.runs = a.runs;
    cfg.base_seed = a.seed;
    cfg.smote_k = a.smote_k;
    cfg.collect_scatter = a.scatter;
    cfg.threads = a.threads;

    const SweepReport report = sweep(images, cfg);
    const fs::path dir(a.out);
    {
        auto out = open_out(dir / "report.csv");
        write_report_csv(out, report);
    }
    {
        auto out = open_out(dir / "thresholds.csv");
        write_threshold_csv(out, report);
    }
    {
        auto out = open_out(dir / "report.txt");
        write_report_text(out, report);
    }
    {
        auto out = open_out(dir / "warnings.txt");
        for (const auto& w : report.warnings) out << w << '\n';
    }
    for (const auto& s : report.scatter) {
        auto out = open_out(dir / fmt::format("scatter_t{}_{}_{}.csv", format_number(s.threshold), to_string(s.family),
                                              to_string(s.feature_set)));
        write_scatter_csv(out, s);
    }
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
}

struct CorrArgs {
    std::string table, out;
};

void run_corr(const CorrArgs& a) {
    const MetricTable table = read_feature_table_file(a.table);
    if (table.size() < 2) throw Error(ErrorKind::data, "correlation needs at least 2 rows");
    const auto y = iou_targets(table);
    struct Entry {
        std::string name;
        Measured r;
    };
    std::vector<Entry> entries;
    std::vector<double> col(table.size());
    for (std::size_t j = 0; j < table.header.size(); ++j) {
        for (std::size_t i = 0; i < table.size(); ++i) col[i] = table.rows[i].features[j];
        entries.push_back({table.header[j], pearson(col, y)});
    }
    std::stable_sort(entries.begin(), entries.end(),
                     [](const Entry& a, const Entry& b) { return std::abs(a.r.value) > std::abs(b.r.value); });
    auto out = open_out(a.out);
    out << "rank,feature,pearson_r,abs_r,degenerate\n";
    for (std::size_t k = 0; k < entries.size(); ++k) {
        const auto& e = entries[k];
        out << fmt::format("{},{},{},{},{}\n", k + 1, e.name, format_number(e.r.value),
                           format_number(std::abs(e.r.value)), e.r.degenerate ? 1 : 0);
    }
}

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::config: return 2;
        case ErrorKind::io: return 3;
        case ErrorKind::format: return 4;
        case ErrorKind::schema: return 5;
        case ErrorKind::data: return 6;
    }
    return 1;
}

/// Splices `key=value` lines of a --config file into the argument list right
/// after the subcommand, skipping keys given on the command line.
std::vector<std::string> expand_config(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string config_path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            config_path = args[i + 1];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            config_path = args[i].substr(9);
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
            break;
        }
    }
    if (config_path.empty()) return args;

    std::ifstream in(config_path);
    if (!in) throw Error(ErrorKind::io, fmt::format("cannot open config file '{}'", config_path));
    auto given = [&](const std::string& flag) {
        return std::any_of(args.begin(), args.end(),
                           [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
    };
    auto trim = [](std::string v) {
        const auto b = v.find_first_not_of(" \t\r");
        const auto e = v.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string{} : v.substr(b, e - b + 1);
    };
    std::vector<std::string> extra;
    int line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorKind::config, fmt::format("{} line {}: expected key=value", config_path, line_no));
        }
        std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        while (!key.empty() && key[0] == '-') key.erase(0, 1);
        const std::string flag = "--" + key;
        if (key.empty() || given(flag)) continue;
        if (value == "true" || value == "false") {
            if (value == "true") extra.push_back(flag);
            continue;
        }
        extra.push_back(flag);
        extra.push_back(value);
    }
    const auto sub = std::find_if(args.begin(), args.end(), [](const std::string& a) { return a.empty() || a[0] != '-'; });
    const auto at = sub == args.end() ? args.end() : sub + 1;
    args.insert(at, extra.begin(), extra.end());
    return args;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Box-wise uncertainty metrics, meta classification and meta regression for object detectors"};
    app.require_subcommand(1);
    app.add_option("--config", "key=value configuration file; command-line flags take precedence");

    SynthArgs synth;
    auto* c_synth = app.add_subcommand("synth", "Generate a synthetic candidate dump and ground truth");
    c_synth->add_option("--out", synth.out, "Output directory")->required();
    c_synth->add_option("--seed", synth.scene.seed, "Random seed");
    c_synth->add_option("--images", synth.scene.num_images, "Number of images");
    c_synth->add_option("--classes", synth.scene.num_classes, "Number of classes C");
    c_synth->add_option("--dropout-runs", synth.scene.dropout_runs, "Dropout repeats J per base candidate");
    c_synth->add_option("--clutter-rate", synth.scene.clutter_rate, "Mean clutter clusters per image");
    c_synth->add_option("--jitter", synth.scene.jitter_sigma, "Corner jitter sigma in pixels");
    c_synth->add_option("--score-noise", synth.scene.score_noise, "Score noise sigma");
    c_synth->add_option("--rows", synth.scene.image_rows, "Image height");
    c_synth->add_option("--cols", synth.scene.image_cols, "Image width");

    ExtractArgs extract;
    auto* c_extract = app.add_subcommand("extract", "Compute the per-box metric table");
    c_extract->add_option("--candidates", extract.candidates, "Candidate dump CSV")->required();
    c_extract->add_option("--groundtruth", extract.groundtruth, "Ground-truth CSV")->required();
    c_extract->add_option("--out", extract.out, "Feature table CSV to write")->required();
    c_extract->add_option("--classes", extract.classes, "Number of classes C")->required();
    c_extract->add_option("--tau", extract.tau, "NMS IoU threshold");
    c_extract->add_option("--threshold", extract.threshold, "Score threshold t");
    c_extract->add_flag("--dropout", extract.dropout, "Add the 20 dropout metrics");
    c_extract->add_option("--threads", extract.threads, "Worker threads (0 = all cores)");

    TrainArgs train;
    auto* c_train = app.add_subcommand("train", "Fit meta models on the training half of a feature table");
    c_train->add_option("--table", train.table, "Feature table CSV")->required();
    c_train->add_option("--out", train.out, "Output directory for model files")->required();
    c_train->add_option("--features", train.features, "baseline|metadetect|metadetect-dropout")->delimiter(',');
    c_train->add_option("--models", train.models, "lr|gb|nn")->delimiter(',');
    c_train->add_option("--tasks", train.tasks, "classification|regression")->delimiter(',');
    c_train->add_option("--seed", train.seed, "Split / training seed");
    c_train->add_option("--smote-k", train.smote_k, "SMOTE neighbours (0 disables)");

    EvalArgs eval;
    auto* c_eval = app.add_subcommand("eval", "Evaluate trained models on the validation half");
    c_eval->add_option("--table", eval.table, "Feature table CSV")->required();
    c_eval->add_option("--model", eval.models, "Model file(s)")->required();
    c_eval->add_option("--out", eval.out, "Report CSV to write")->required();
    c_eval->add_option("--split", eval.split, "val|train|all")->check(CLI::IsMember({"val", "train", "all"}));
    c_eval->add_flag("--allow-train-eval", eval.allow_train_eval, "Permit evaluation on training rows");

    SweepArgs sw;
    auto* c_sweep = app.add_subcommand("sweep", "Full threshold sweep with repeated resampling");
    c_sweep->add_option("--candidates", sw.candidates, "Candidate dump CSV")->required();
    c_sweep->add_option("--groundtruth", sw.groundtruth, "Ground-truth CSV")->required();
    c_sweep->add_option("--out", sw.out, "Output directory")->required();
    c_sweep->add_option("--classes", sw.classes, "Number of classes C")->required();
    c_sweep->add_option("--tau", sw.tau, "NMS IoU threshold");
    auto* schedule = c_sweep->add_option("--schedule", sw.schedule, "linear|log");
    c_sweep->add_option("--threshold", sw.thresholds, "Explicit score thresholds")->delimiter(',')->excludes(schedule);
    c_sweep->add_option("--features", sw.features, "baseline|metadetect|metadetect-dropout")->delimiter(',');
    c_sweep->add_option("--models", sw.models, "lr|gb|nn")->delimiter(',');
    c_sweep->add_option("--tasks", sw.tasks, "classification|regression")->delimiter(',');
    c_sweep->add_option("--runs", sw.runs, "Resampling runs");
    c_sweep->add_option("--seed", sw.seed, "Base seed; run r uses seed + r");
    c_sweep->add_option("--smote-k", sw.smote_k, "SMOTE neighbours (0 disables)");
    c_sweep->add_flag("--scatter", sw.scatter, "Write true/predicted IoU pairs of run 0");
    c_sweep->add_option("--threads", sw.threads, "Worker threads (0 = all cores)");

    CorrArgs corr;
    auto* c_corr = app.add_subcommand("corr", "Pearson correlation of every metric with the true IoU");
    c_corr->add_option("--table", corr.table, "Feature table CSV")->required();
    c_corr->add_option("--out", corr.out, "Correlation CSV to write")->required();

    std::vector<std::string> args;
    try {
        args = expand_config(argc, argv);
    } catch (const Error& e) {
        std::cerr << "metadetect: " << to_string(e.kind()) << ": " << e.what() << '\n';
        return exit_code(e.kind());
    }
    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*c_synth) run_synth(synth);
        else if (*c_extract) run_extract(extract);
        else if (*c_train) run_train(train);
        else if (*c_eval) run_eval(eval);
        else if (*c_sweep) run_sweep(sw);
        else if (*c_corr) run_corr(corr);
    } catch (const Error& e) {
        std::cerr << "metadetect: " << to_string(e.kind()) << ": " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "metadetect: io error: " << e.what() << '\n';
        return exit_code(ErrorKind::io);
    }
    return 0;
}
