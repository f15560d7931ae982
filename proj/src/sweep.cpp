#include "metadetect/sweep.hpp"
#include "metadetect/error.hpp"
#include "metadetect/evaluation.hpp"
#include "metadetect/io.hpp"
#include "metadetect/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <ostream>

#include <fmt/core.h>

namespace metadetect {

std::string_view to_string(FeatureSet fs) noexcept {
    switch (fs) {
        case FeatureSet::baseline: return "baseline";
        case FeatureSet::metadetect: return "metadetect";
        case FeatureSet::metadetect_dropout: return "metadetect-dropout";
    }
    return "?";
}

FeatureSet parse_feature_set(std::string_view s) {
    if (s == "baseline") return FeatureSet::baseline;
    if (s == "metadetect") return FeatureSet::metadetect;
    if (s == "metadetect-dropout") return FeatureSet::metadetect_dropout;
    throw Error(ErrorKind::config,
                fmt::format("unknown feature set '{}' (expected baseline, metadetect or metadetect-dropout)", s));
}

bool needs_dropout(FeatureSet fs) noexcept { return fs == FeatureSet::metadetect_dropout; }

std::vector<std::string> feature_set_columns(FeatureSet fs, int num_classes) {
    if (fs == FeatureSet::baseline) return {"s"};
    return feature_names(num_classes, needs_dropout(fs));
}

std::map<std::string, double> evaluate_model(const MetaModel& model, const MetricTable& val) {
    if (std::any_of(val.rows.begin(), val.rows.end(), [](const MetricRow& r) { return r.synthetic(); })) {
        throw Error(ErrorKind::data, "validation data must not contain synthetic rows");
    }
    const auto idx = column_indices(val.header, model.header);
    const Matrix x = to_matrix(val, idx);
    const auto pred = predict(model, x, model.header);

    std::map<std::string, double> out;
    if (model.task == Task::classification) {
        const auto y = tp_targets(val);
        out["accuracy"] = accuracy(y, pred);
        const bool both = std::any_of(y.begin(), y.end(), [](double v) { return v == 1.0; }) &&
                          std::any_of(y.begin(), y.end(), [](double v) { return v == 0.0; });
        if (both) out["auroc"] = auroc(y, pred);
    } else {
        const auto y = iou_targets(val);
        if (y.size() >= 2) {
            if (const auto r = r2(y, pred); !r.degenerate) out["r2"] = r.value;
        }
        out["residual_std"] = residual_std(y, pred);
    }
    return out;
}

MetaModel train_model(const MetricTable& train, ModelFamily family, FeatureSet fs, Task task, std::uint64_t seed,
                      int smote_k) {
    const auto columns = feature_set_columns(fs, train.num_classes);
    MetricTable projected = select_columns(train, columns);
    if (task == Task::classification && smote_k > 0) projected = smote(projected, smote_k, seed);
    std::vector<std::size_t> all(columns.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const Matrix x = to_matrix(projected, all);
    const auto y = task == Task::classification ? tp_targets(projected) : iou_targets(projected);
    return fit(family, x, y, task, seed, columns);
}

const SweepCell* SweepReport::find(double threshold, ModelFamily family, FeatureSet fs,
                                   std::string_view metric) const {
    for (const auto& c : cells) {
        if (c.threshold == threshold && c.family == family && c.feature_set == fs && c.metric == metric) return &c;
    }
    return nullptr;
}

namespace {

std::vector<std::string> metric_names(Task task) {
    return task == Task::classification ? std::vector<std::string>{"accuracy", "auroc"}
                                        : std::vector<std::string>{"r2", "residual_std"};
}

double survivors_map(const MetricTable& table, std::span<const ImageData> images) {
    std::map<int, std::vector<ScoredBox>> preds, gts;
    const std::size_t first_prob = 6;
    for (const auto& row : table.rows) {
        const auto& f = row.features;
        const auto probs = std::span(f).subspan(first_prob, static_cast<std::size_t>(table.num_classes));
        const int cls = static_cast<int>(std::distance(probs.begin(), std::max_element(probs.begin(), probs.end()))) + 1;
        preds[cls].push_back({row.image_id, {f[1], f[2], f[3], f[4]}, f[5]});
    }
    for (const auto& img : images) {
        for (const auto& g : img.ground_truth) gts[g.class_index].push_back({img.image_id, g.box, 1.0});
    }
    return mean_average_precision(preds, gts).map;
}

/// Code points in a UTF-8 string.
std::size_t display_width(const std::string& s) {
    return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char ch) {
        return (static_cast<unsigned char>(ch) & 0xC0) != 0x80;
    }));
}

struct Job {
    int run = 0;
    ModelFamily family = ModelFamily::gbdt;
    FeatureSet fs = FeatureSet::baseline;
    Task task = Task::regression;
};

struct JobResult {
    std::map<std::string, double> metrics;
    std::optional<std::string> error;
    std::vector<double> predicted;  ///< regression predictions on the validation half, run 0 only
};

}  // namespace

SweepReport sweep(std::span<const ImageData> images, const SweepConfig& cfg) {
    if (cfg.runs < 1) throw Error(ErrorKind::config, "runs must be >= 1");
    if (cfg.thresholds.empty()) throw Error(ErrorKind::config, "threshold schedule is empty");
    if (cfg.smote_k < 0) throw Error(ErrorKind::config, "smote k must be >= 0");
    const bool with_dropout = std::any_of(cfg.feature_sets.begin(), cfg.feature_sets.end(), needs_dropout);

    SweepReport report;
    report.runs = cfg.runs;
    for (int r = 0; r < cfg.runs; ++r) report.seeds.push_back(cfg.base_seed + static_cast<std::uint64_t>(r));

    std::vector<Job> jobs;
    for (int r = 0; r < cfg.runs; ++r) {
        for (auto family : cfg.families) {
            for (auto fs : cfg.feature_sets) {
                for (auto task : cfg.tasks) jobs.push_back({r, family, fs, task});
            }
        }
    }

    for (double t : cfg.thresholds) {
        ExtractOptions opts{cfg.num_classes, t, cfg.tau, with_dropout};
        const MetricTable table = extract_table(images, opts, cfg.threads);

        ThresholdSummary summary;
        summary.threshold = t;
        summary.rows = table.size();
        summary.tp = table.count_tp();
        summary.fp = summary.rows - summary.tp;
        summary.map = survivors_map(table, images);
        if (table.size() / 2 < 2) {
            summary.skipped = true;
            report.warnings.push_back(
                fmt::format("threshold {}: {} rows leave fewer than 2 validation rows, skipped", t, table.size()));
            report.thresholds.push_back(summary);
            continue;
        }
        report.thresholds.push_back(summary);

        std::vector<std::pair<MetricTable, MetricTable>> splits;
        for (int r = 0; r < cfg.runs; ++r) splits.push_back(split_resample(table, report.seeds[static_cast<std::size_t>(r)]));

        std::vector<JobResult> results(jobs.size());
        parallel_for(jobs.size(), cfg.threads, [&](std::size_t j) {
            const Job& job = jobs[j];
            const auto& [train, val] = splits[static_cast<std::size_t>(job.run)];
            const std::uint64_t seed = report.seeds[static_cast<std::size_t>(job.run)];
            try {
                const MetaModel model = train_model(train, job.family, job.fs, job.task, seed, cfg.smote_k);
                results[j].metrics = evaluate_model(model, val);
                if (cfg.collect_scatter && job.run == 0 && job.task == Task::regression) {
                    const auto idx = column_indices(val.header, model.header);
                    results[j].predicted = predict(model, to_matrix(val, idx));
                }
            } catch (const Error& e) {
                results[j].error = e.what();
            }
        });

        for (std::size_t j = 0; j < jobs.size(); ++j) {
            if (results[j].error) {
                report.warnings.push_back(fmt::format("threshold {} run {} {} {} {}: {}", t, jobs[j].run,
                                                      to_string(jobs[j].family), to_string(jobs[j].fs),
                                                      to_string(jobs[j].task), *results[j].error));
            }
        }

        for (auto family : cfg.families) {
            for (auto fs : cfg.feature_sets) {
                for (auto task : cfg.tasks) {
                    for (const auto& metric : metric_names(task)) {
                        SweepCell cell{t, family, fs, metric, {}, 0.0, 0.0};
                        for (std::size_t j = 0; j < jobs.size(); ++j) {
                            const Job& job = jobs[j];
                            if (job.family != family || job.fs != fs || job.task != task) continue;
                            const auto it = results[j].metrics.find(metric);
                            if (it != results[j].metrics.end()) cell.values.push_back(it->second);
                        }
                        if (cell.values.size() != static_cast<std::size_t>(cfg.runs)) {
                            report.warnings.push_back(fmt::format("threshold {} {} {} {}: defined in {} of {} runs, omitted",
                                                                  t, to_string(family), to_string(fs), metric,
                                                                  cell.values.size(), cfg.runs));
                            continue;
                        }
                        const double n = static_cast<double>(cell.values.size());
                        cell.mean = std::accumulate(cell.values.begin(), cell.values.end(), 0.0) / n;
                        double ss = 0.0;
                        for (double v : cell.values) ss += (v - cell.mean) * (v - cell.mean);
                        cell.std = std::sqrt(ss / n);
                        report.cells.push_back(std::move(cell));
                    }
                }
                if (cfg.collect_scatter) {
                    for (std::size_t j = 0; j < jobs.size(); ++j) {
                        const Job& job = jobs[j];
                        if (job.run != 0 || job.family != family || job.fs != fs || job.task != Task::regression ||
                            results[j].error) {
                            continue;
                        }
                        report.scatter.push_back({t, family, fs, iou_targets(splits[0].second), results[j].predicted});
                    }
                }
            }
        }
    }
    return report;
}

void write_report_csv(std::ostream& out, const SweepReport& report) {
    out << "threshold,family,feature_set,metric,mean,std,runs\n";
    for (const auto& c : report.cells) {
        out << format_number(c.threshold) << ',' << to_string(c.family) << ',' << to_string(c.feature_set) << ','
            << c.metric << ',' << format_number(c.mean) << ',' << format_number(c.std) << ',' << c.values.size()
            << '\n';
    }
}

void write_threshold_csv(std::ostream& out, const SweepReport& report) {
    out << "threshold,rows,tp,fp,map,status\n";
    for (const auto& t : report.thresholds) {
        out << format_number(t.threshold) << ',' << t.rows << ',' << t.tp << ',' << t.fp << ',' << format_number(t.map)
            << ',' << (t.skipped ? "skipped" : "ok") << '\n';
    }
}

void write_report_text(std::ostream& out, const SweepReport& report) {
    std::vector<std::pair<std::string, ModelFamily>> tables;
    std::vector<FeatureSet> sets;
    std::vector<double> thresholds;
    for (const auto& c : report.cells) {
        if (std::find(tables.begin(), tables.end(), std::pair{c.metric, c.family}) == tables.end()) {
            tables.emplace_back(c.metric, c.family);
        }
        if (std::find(sets.begin(), sets.end(), c.feature_set) == sets.end()) sets.push_back(c.feature_set);
        if (std::find(thresholds.begin(), thresholds.end(), c.threshold) == thresholds.end()) {
            thresholds.push_back(c.threshold);
        }
    }

    for (const auto& [metric, family] : tables) {
        std::vector<std::vector<std::string>> grid;
        std::vector<std::string> head{"threshold"};
        for (auto fs : sets) head.emplace_back(to_string(fs));
        grid.push_back(head);
        for (double t : thresholds) {
            std::vector<std::string> line{fmt::format("{:.6g}", t)};
            for (auto fs : sets) {
                const SweepCell* c = report.find(t, family, fs, metric);
                line.push_back(c ? fmt::format("{:.6g}(±{:.6g})", c->mean, c->std) : "-");
            }
            grid.push_back(std::move(line));
        }
        std::vector<std::size_t> width(head.size(), 0);
        for (const auto& row : grid) {
            for (std::size_t k = 0; k < row.size(); ++k) width[k] = std::max(width[k], display_width(row[k]));
        }
        out << fmt::format("{} ({}), mean(±std) over {} runs\n", metric, to_string(family), report.runs);
        for (const auto& row : grid) {
            for (std::size_t k = 0; k < row.size(); ++k) {
                out << (k ? "  " : "") << row[k];
                if (k + 1 < row.size()) out << std::string(width[k] - display_width(row[k]), ' ');
            }
            out << '\n';
        }
        out << '\n';
    }
}

void write_scatter_csv(std::ostream& out, const ScatterSeries& series) {
    out << "true_iou,predicted_iou\n";
    for (std::size_t i = 0; i < series.true_iou.size(); ++i) {
        out << format_number(series.true_iou[i]) << ',' << format_number(series.predicted_iou[i]) << '\n';
    }
}

}  // namespace metadetect
