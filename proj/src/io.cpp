#include "metadetect/io.hpp"
#include "metadetect/error.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include <fmt/core.h>
#include <fmt/ranges.h>

namespace metadetect {
namespace {

std::vector<std::string> split_csv(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

/// Line reader that tracks 1-based line numbers and strips CR.
class CsvReader {
public:
    explicit CsvReader(std::istream& in) : in_(in) {}

    bool next(std::vector<std::string>& fields) {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_no_;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            fields = split_csv(line);
            return true;
        }
        return false;
    }

    void expect_header(const std::vector<std::string>& expected) {
        std::vector<std::string> got;
        if (!next(got)) throw Error(ErrorKind::format, "missing CSV header");
        if (got != expected) {
            throw Error(ErrorKind::format, fmt::format("line {}: header mismatch, expected [{}], got [{}]", line_no_,
                                                       fmt::join(expected, ","), fmt::join(got, ",")));
        }
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw Error(ErrorKind::format, fmt::format("line {}: {}", line_no_, msg));
    }

    double number(const std::string& tok) const {
        if (tok.empty()) fail("empty numeric field");
        char* end = nullptr;
        errno = 0;
        const double v = std::strtod(tok.c_str(), &end);
        if (end != tok.c_str() + tok.size() || errno == ERANGE) fail(fmt::format("bad number '{}'", tok));
        return v;
    }

    long long integer(const std::string& tok) const {
        if (tok.empty()) fail("empty integer field");
        char* end = nullptr;
        errno = 0;
        const long long v = std::strtoll(tok.c_str(), &end, 10);
        if (end != tok.c_str() + tok.size() || errno == ERANGE) fail(fmt::format("bad integer '{}'", tok));
        return v;
    }

    void check_width(const std::vector<std::string>& fields, std::size_t width) const {
        if (fields.size() != width) fail(fmt::format("expected {} fields, got {}", width, fields.size()));
    }

    /// Re-throws a schema violation with the current line number attached.
    template <typename Fn>
    void with_line(Fn&& fn) const {
        try {
            fn();
        } catch (const Error& e) {
            throw Error(e.kind(), fmt::format("line {}: {}", line_no_, e.what()));
        }
    }

    int line_no() const noexcept { return line_no_; }

private:
    std::istream& in_;
    int line_no_ = 0;
};

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) out << (i ? "," : "") << fields[i];
    out << '\n';
}

std::string check_image_id(const CsvReader& r, const std::string& id) {
    if (id.empty()) r.fail("empty image_id");
    return id;
}

}  // namespace

std::string format_number(double v) { return fmt::format("{}", v); }

std::vector<std::string> candidate_header(int num_classes) {
    std::vector<std::string> h{"image_id", "anchor_id", "dropout_run", "r_min", "r_max", "c_min", "c_max", "score"};
    for (int k = 1; k <= num_classes; ++k) h.push_back(fmt::format("p_{}", k));
    return h;
}

std::vector<std::string> ground_truth_header() { return {"image_id", "r_min", "r_max", "c_min", "c_max", "class"}; }

std::vector<std::string> feature_table_header(int num_classes, bool with_dropout) {
    std::vector<std::string> h{"image_id"};
    const auto names = feature_names(num_classes, with_dropout);
    h.insert(h.end(), names.begin(), names.end());
    h.insert(h.end(), {"true_iou", "is_tp"});
    return h;
}

std::vector<DumpRow> read_candidates(std::istream& in, int num_classes) {
    if (num_classes < 1) throw Error(ErrorKind::config, "number of classes must be >= 1");
    CsvReader r(in);
    const auto header = candidate_header(num_classes);
    std::vector<std::string> got;
    if (!r.next(got)) throw Error(ErrorKind::format, "missing CSV header");
    if (got != header) {
        // A well-formed header for a different C is a schema problem, anything else a format one.
        const int file_classes = static_cast<int>(got.size()) - 8;
        if (file_classes >= 1 && got == candidate_header(file_classes)) {
            throw Error(ErrorKind::schema, fmt::format("line {}: file has {} class probabilities, expected {}",
                                                       r.line_no(), file_classes, num_classes));
        }
        throw Error(ErrorKind::format, fmt::format("line {}: header mismatch, expected [{}], got [{}]", r.line_no(),
                                                   fmt::join(header, ","), fmt::join(got, ",")));
    }
    std::vector<DumpRow> out;
    std::vector<std::string> f;
    while (r.next(f)) {
        r.check_width(f, header.size());
        DumpRow row;
        row.image_id = check_image_id(r, f[0]);
        auto& c = row.candidate;
        c.anchor_id = r.integer(f[1]);
        c.dropout_run = static_cast<int>(r.integer(f[2]));
        c.box = {r.number(f[3]), r.number(f[4]), r.number(f[5]), r.number(f[6])};
        c.score = r.number(f[7]);
        for (int k = 0; k < num_classes; ++k) c.probs.push_back(r.number(f[8 + static_cast<std::size_t>(k)]));
        r.with_line([&] { validate(c, num_classes); });
        out.push_back(std::move(row));
    }
    return out;
}

std::vector<GroundTruthRow> read_ground_truth(std::istream& in, int num_classes) {
    CsvReader r(in);
    const auto header = ground_truth_header();
    r.expect_header(header);
    std::vector<GroundTruthRow> out;
    std::vector<std::string> f;
    while (r.next(f)) {
        r.check_width(f, header.size());
        GroundTruthRow row;
        row.image_id = check_image_id(r, f[0]);
        row.gt.box = {r.number(f[1]), r.number(f[2]), r.number(f[3]), r.number(f[4])};
        row.gt.class_index = static_cast<int>(r.integer(f[5]));
        r.with_line([&] { validate(row.gt, num_classes); });
        out.push_back(std::move(row));
    }
    return out;
}

void write_candidates(std::ostream& out, const std::vector<DumpRow>& rows, int num_classes) {
    write_row(out, candidate_header(num_classes));
    for (const auto& row : rows) {
        const auto& c = row.candidate;
        std::vector<std::string> f{row.image_id,
                                   std::to_string(c.anchor_id),
                                   std::to_string(c.dropout_run),
                                   format_number(c.box.r_min),
                                   format_number(c.box.r_max),
                                   format_number(c.box.c_min),
                                   format_number(c.box.c_max),
                                   format_number(c.score)};
        for (double p : c.probs) f.push_back(format_number(p));
        write_row(out, f);
    }
}

void write_ground_truth(std::ostream& out, const std::vector<GroundTruthRow>& rows) {
    write_row(out, ground_truth_header());
    for (const auto& row : rows) {
        write_row(out, {row.image_id, format_number(row.gt.box.r_min), format_number(row.gt.box.r_max),
                        format_number(row.gt.box.c_min), format_number(row.gt.box.c_max),
                        std::to_string(row.gt.class_index)});
    }
}

MetricTable read_feature_table(std::istream& in) {
    CsvReader r(in);
    std::vector<std::string> got;
    if (!r.next(got)) throw Error(ErrorKind::format, "missing CSV header");
    const auto num_classes = static_cast<int>(
        std::count_if(got.begin(), got.end(), [](const std::string& s) { return s.rfind("p_", 0) == 0; }));
    const bool with_dropout = std::find(got.begin(), got.end(), "s_mean_mc") != got.end();
    if (num_classes < 1 || got != feature_table_header(num_classes, with_dropout)) {
        throw Error(ErrorKind::format, fmt::format("line {}: feature table header does not match the canonical layout",
                                                   r.line_no()));
    }
    MetricTable table = make_table(num_classes, with_dropout);
    const std::size_t d = table.header.size();
    std::map<std::string, std::size_t> per_image;
    std::vector<std::string> f;
    while (r.next(f)) {
        r.check_width(f, d + 3);
        MetricRow row;
        row.image_id = check_image_id(r, f[0]);
        row.box_index = per_image[row.image_id]++;
        row.features.reserve(d);
        for (std::size_t j = 0; j < d; ++j) {
            const double v = r.number(f[1 + j]);
            if (!std::isfinite(v)) r.fail("non-finite feature value");
            row.features.push_back(v);
        }
        row.true_iou = r.number(f[d + 1]);
        if (!(row.true_iou >= 0.0 && row.true_iou <= 1.0)) r.fail("true_iou outside [0,1]");
        const long long tp = r.integer(f[d + 2]);
        if (tp != 0 && tp != 1) r.fail("is_tp must be 0 or 1");
        row.is_tp = tp == 1;
        if (row.is_tp != (row.true_iou >= kTruePositiveIou)) r.fail("is_tp inconsistent with true_iou");
        table.rows.push_back(std::move(row));
    }
    return table;
}

void write_feature_table(std::ostream& out, const MetricTable& table) {
    if (table.rows.end() != std::find_if(table.rows.begin(), table.rows.end(),
                                         [](const MetricRow& r) { return r.synthetic(); })) {
        throw Error(ErrorKind::data, "refusing to write synthetic (SMOTE) rows to a feature table");
    }
    write_row(out, feature_table_header(table.num_classes, table.dropout_enabled));
    std::vector<std::string> f;
    for (const auto& row : table.rows) {
        f.clear();
        f.push_back(row.image_id);
        for (double v : row.features) f.push_back(format_number(v));
        f.push_back(format_number(row.true_iou));
        f.push_back(row.is_tp ? "1" : "0");
        write_row(out, f);
    }
}

std::vector<ImageData> group_by_image(const std::vector<DumpRow>& dump, const std::vector<GroundTruthRow>& gts) {
    std::map<std::string, ImageData> images;
    for (const auto& row : dump) {
        auto& img = images[row.image_id];
        img.image_id = row.image_id;
        img.candidates.push_back(row.candidate);
    }
    for (const auto& row : gts) {
        auto& img = images[row.image_id];
        img.image_id = row.image_id;
        img.ground_truth.push_back(row.gt);
    }
    std::vector<ImageData> out;
    out.reserve(images.size());
    for (auto& [_, img] : images) out.push_back(std::move(img));
    return out;
}

namespace {

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, fmt::format("cannot open '{}'", path));
    return in;
}

template <typename Fn>
auto tag_path(const std::string& path, Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        throw Error(e.kind(), fmt::format("{}: {}", path, e.what()));
    }
}

}  // namespace

std::vector<DumpRow> read_candidates_file(const std::string& path, int num_classes) {
    auto in = open_in(path);
    return tag_path(path, [&] { return read_candidates(in, num_classes); });
}

std::vector<GroundTruthRow> read_ground_truth_file(const std::string& path, int num_classes) {
    auto in = open_in(path);
    return tag_path(path, [&] { return read_ground_truth(in, num_classes); });
}

MetricTable read_feature_table_file(const std::string& path) {
    auto in = open_in(path);
    return tag_path(path, [&] { return read_feature_table(in); });
}

void write_feature_table_file(const std::string& path, const MetricTable& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, fmt::format("cannot write '{}'", path));
    write_feature_table(out, table);
    if (!out) throw Error(ErrorKind::io, fmt::format("failed writing '{}'", path));
}

}  // namespace metadetect
