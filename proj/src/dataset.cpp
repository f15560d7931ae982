#include "metadetect/dataset.hpp"
#include "metadetect/error.hpp"
#include "metadetect/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <fmt/core.h>

namespace metadetect {

std::size_t MetricTable::count_tp() const noexcept {
    return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const MetricRow& r) { return r.is_tp; }));
}

MetricTable make_table(int num_classes, bool with_dropout) {
    if (num_classes < 1) throw Error(ErrorKind::config, "number of classes must be >= 1");
    MetricTable t;
    t.header = feature_names(num_classes, with_dropout);
    t.num_classes = num_classes;
    t.dropout_enabled = with_dropout;
    return t;
}

void validate(const MetricTable& table) {
    if (table.header != feature_names(table.num_classes, table.dropout_enabled)) {
        throw Error(ErrorKind::schema, "feature header does not match the canonical column order");
    }
    std::set<std::pair<std::string, std::size_t>> seen;
    for (const auto& row : table.rows) {
        if (row.features.size() != table.header.size()) {
            throw Error(ErrorKind::schema, fmt::format("row has {} features, header has {}", row.features.size(),
                                                       table.header.size()));
        }
        if (row.synthetic()) continue;
        if (!seen.emplace(row.image_id, row.box_index).second) {
            throw Error(ErrorKind::format,
                        fmt::format("duplicated row for image '{}' box {}", row.image_id, row.box_index));
        }
    }
}

std::vector<MetricRow> extract_image(const ImageData& image, const ExtractOptions& opts) {
    const auto filtered = score_filter(image.candidates, opts.score_threshold);
    auto records = nms(filtered, opts.tau, image.image_id);
    if (opts.with_dropout) attach_dropout(records, image.candidates);
    std::vector<MetricRow> rows;
    rows.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        rows.push_back(make_row(records[i], i, image.ground_truth, opts.num_classes, opts.with_dropout));
    }
    return rows;
}

MetricTable extract_table(std::span<const ImageData> images, const ExtractOptions& opts, unsigned threads) {
    MetricTable table = make_table(opts.num_classes, opts.with_dropout);
    std::vector<std::vector<MetricRow>> per_image(images.size());
    parallel_for(images.size(), threads, [&](std::size_t i) { per_image[i] = extract_image(images[i], opts); });
    for (auto& rows : per_image) {
        std::move(rows.begin(), rows.end(), std::back_inserter(table.rows));
    }
    return table;
}

std::pair<MetricTable, MetricTable> split_resample(const MetricTable& table, std::uint64_t seed) {
    if (table.size() < 2) throw Error(ErrorKind::data, "resampling needs at least 2 rows");
    std::vector<std::size_t> perm(table.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);

    MetricTable train = table;
    MetricTable val = table;
    train.rows.clear();
    val.rows.clear();
    const std::size_t n_train = (table.size() + 1) / 2;
    for (std::size_t i = 0; i < perm.size(); ++i) {
        (i < n_train ? train : val).rows.push_back(table.rows[perm[i]]);
    }
    return {std::move(train), std::move(val)};
}

MetricTable smote(const MetricTable& train, int k, std::uint64_t seed) {
    if (k < 1) throw Error(ErrorKind::config, "SMOTE needs k >= 1");
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < train.size(); ++i) (train.rows[i].is_tp ? pos : neg).push_back(i);
    if (pos.empty() || neg.empty()) throw Error(ErrorKind::data, "SMOTE needs both classes present");
    if (pos.size() == neg.size()) return train;

    const bool minority_is_tp = pos.size() < neg.size();
    const auto& minority = minority_is_tp ? pos : neg;
    const std::size_t majority_size = minority_is_tp ? neg.size() : pos.size();
    if (minority.size() < 2) throw Error(ErrorKind::data, "SMOTE needs at least 2 minority rows");

    const std::size_t dim = train.header.size();
    std::vector<double> mean(dim, 0.0), scale(dim, 0.0);
    for (const auto& row : train.rows) {
        for (std::size_t j = 0; j < dim; ++j) mean[j] += row.features[j];
    }
    for (auto& m : mean) m /= static_cast<double>(train.size());
    for (const auto& row : train.rows) {
        for (std::size_t j = 0; j < dim; ++j) scale[j] += (row.features[j] - mean[j]) * (row.features[j] - mean[j]);
    }
    for (auto& s : scale) {
        s = std::sqrt(s / static_cast<double>(train.size()));
        s = s > 1e-12 ? 1.0 / s : 0.0;
    }

    const std::size_t m = minority.size();
    Matrix z(m, dim);
    for (std::size_t a = 0; a < m; ++a) {
        const auto& f = train.rows[minority[a]].features;
        for (std::size_t j = 0; j < dim; ++j) z(a, j) = (f[j] - mean[j]) * scale[j];
    }

    const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), m - 1);
    std::vector<std::vector<std::size_t>> neighbours(m);
    std::vector<std::pair<double, std::size_t>> dist;
    for (std::size_t a = 0; a < m; ++a) {
        dist.clear();
        for (std::size_t b = 0; b < m; ++b) {
            if (b == a) continue;
            double d2 = 0.0;
            const auto ra = z.row(a), rb = z.row(b);
            for (std::size_t j = 0; j < dim; ++j) d2 += (ra[j] - rb[j]) * (ra[j] - rb[j]);
            dist.emplace_back(d2, b);
        }
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());
        for (std::size_t q = 0; q < kk; ++q) neighbours[a].push_back(dist[q].second);
    }

    MetricTable out = train;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick_sample(0, m - 1);
    std::uniform_int_distribution<std::size_t> pick_neighbour(0, kk - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t needed = majority_size - m;
    for (std::size_t s = 0; s < needed; ++s) {
        const std::size_t a = pick_sample(rng);
        const std::size_t b = neighbours[a][pick_neighbour(rng)];
        const double u = unit(rng);
        const MetricRow& x = train.rows[minority[a]];
        const MetricRow& nb = train.rows[minority[b]];

        MetricRow row;
        row.image_id = "synthetic";
        row.box_index = s;
        row.features.resize(dim);
        for (std::size_t j = 0; j < dim; ++j) {
            const double lo = std::min(x.features[j], nb.features[j]);
            const double hi = std::max(x.features[j], nb.features[j]);
            row.features[j] = std::clamp(x.features[j] + u * (nb.features[j] - x.features[j]), lo, hi);
        }
        row.true_iou = x.true_iou;
        row.is_tp = x.is_tp;
        row.origin = SyntheticOrigin{minority[a], minority[b]};
        out.rows.push_back(std::move(row));
    }
    return out;
}

std::vector<std::size_t> column_indices(std::span<const std::string> header, std::span<const std::string> wanted) {
    std::vector<std::size_t> out;
    out.reserve(wanted.size());
    for (const auto& name : wanted) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw Error(ErrorKind::schema, fmt::format("column '{}' not present in table", name));
        out.push_back(static_cast<std::size_t>(std::distance(header.begin(), it)));
    }
    return out;
}

MetricTable select_columns(const MetricTable& table, std::span<const std::string> names) {
    const auto idx = column_indices(table.header, names);
    MetricTable out;
    out.header.assign(names.begin(), names.end());
    out.num_classes = table.num_classes;
    out.dropout_enabled = table.dropout_enabled;
    out.rows.reserve(table.size());
    for (const auto& row : table.rows) {
        MetricRow r = row;
        r.features.resize(idx.size());
        for (std::size_t j = 0; j < idx.size(); ++j) r.features[j] = row.features[idx[j]];
        out.rows.push_back(std::move(r));
    }
    return out;
}

Matrix to_matrix(const MetricTable& table, std::span<const std::size_t> columns) {
    Matrix x(table.size(), columns.size());
    for (std::size_t i = 0; i < table.size(); ++i) {
        for (std::size_t j = 0; j < columns.size(); ++j) x(i, j) = table.rows[i].features[columns[j]];
    }
    return x;
}

std::vector<double> iou_targets(const MetricTable& table) {
    std::vector<double> y;
    y.reserve(table.size());
    for (const auto& r : table.rows) y.push_back(r.true_iou);
    return y;
}

std::vector<double> tp_targets(const MetricTable& table) {
    std::vector<double> y;
    y.reserve(table.size());
    for (const auto& r : table.rows) y.push_back(r.is_tp ? 1.0 : 0.0);
    return y;
}

}  // namespace metadetect
