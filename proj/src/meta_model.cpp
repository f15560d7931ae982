#include "metadetect/error.hpp"
#include "metadetect/meta_model.hpp"
#include "model_internal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include <fmt/core.h>
#include <fmt/ranges.h>

namespace metadetect {

namespace detail {

void check_fit_inputs(const Matrix& x, std::span<const double> y, Task task) {
    if (x.rows() == 0) throw Error(ErrorKind::data, "cannot fit a model on zero rows");
    if (x.rows() != y.size()) throw Error(ErrorKind::data, "feature and target row counts differ");
    for (double v : y) {
        if (task == Task::classification && v != 0.0 && v != 1.0) {
            throw Error(ErrorKind::data, "classification targets must be 0 or 1");
        }
        if (task == Task::regression && !(v >= 0.0 && v <= 1.0)) {
            throw Error(ErrorKind::data, "regression targets must lie in [0,1]");
        }
    }
}

}  // namespace detail

double sigmoid(double z) noexcept {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

std::string_view to_string(ModelFamily f) noexcept {
    switch (f) {
        case ModelFamily::linear: return "lr";
        case ModelFamily::gbdt: return "gb";
        case ModelFamily::neural_net: return "nn";
    }
    return "?";
}

std::string_view to_string(Task t) noexcept {
    return t == Task::classification ? "classification" : "regression";
}

ModelFamily parse_family(std::string_view s) {
    if (s == "lr") return ModelFamily::linear;
    if (s == "gb") return ModelFamily::gbdt;
    if (s == "nn") return ModelFamily::neural_net;
    throw Error(ErrorKind::config, fmt::format("unknown model family '{}' (expected lr, gb or nn)", s));
}

Task parse_task(std::string_view s) {
    if (s == "classification") return Task::classification;
    if (s == "regression") return Task::regression;
    throw Error(ErrorKind::config, fmt::format("unknown task '{}' (expected classification or regression)", s));
}

Standardizer Standardizer::fit(const Matrix& x) {
    Standardizer s;
    const std::size_t n = x.rows(), d = x.cols();
    s.mean.assign(d, 0.0);
    s.std.assign(d, 0.0);
    if (n == 0) return s;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) s.mean[j] += x(i, j);
    }
    for (auto& m : s.mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) s.std[j] += (x(i, j) - s.mean[j]) * (x(i, j) - s.mean[j]);
    }
    for (auto& v : s.std) v = std::sqrt(v / static_cast<double>(n));
    return s;
}

void Standardizer::apply_row(std::span<const double> in, std::span<double> out) const {
    for (std::size_t j = 0; j < in.size(); ++j) {
        out[j] = std[j] > 1e-12 ? (in[j] - mean[j]) / std[j] : 0.0;
    }
}

Matrix Standardizer::apply(const Matrix& x) const {
    Matrix z(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) apply_row(x.row(i), z.row(i));
    return z;
}

MetaModel fit(ModelFamily family, const Matrix& x, std::span<const double> y, Task task, std::uint64_t seed,
              std::vector<std::string> header) {
    MetaModel m;
    switch (family) {
        case ModelFamily::linear: m = fit_linear(x, y, task, {}, std::move(header)); break;
        case ModelFamily::gbdt: m = fit_gbdt(x, y, task, {}, std::move(header)); break;
        case ModelFamily::neural_net: m = fit_nn(x, y, task, {}, seed, std::move(header)); break;
    }
    m.train_seed = seed;
    return m;
}

std::vector<double> predict(const MetaModel& model, const Matrix& x) {
    const std::size_t d = model.preprocessing.mean.size();
    if (x.cols() != d && x.rows() > 0) {
        throw Error(ErrorKind::schema, fmt::format("model expects {} columns, got {}", d, x.cols()));
    }
    std::vector<double> out(x.rows());
    std::vector<double> z(d);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        model.preprocessing.apply_row(x.row(i), z);
        double raw = 0.0;
        bool is_margin = true;
        if (const auto* lw = std::get_if<LinearWeights>(&model.params)) {
            raw = lw->bias;
            for (std::size_t j = 0; j < d; ++j) raw += lw->weights[j] * z[j];
        } else if (const auto* ens = std::get_if<TreeEnsemble>(&model.params)) {
            raw = ens->margin(z);
        } else {
            raw = std::get<NeuralNet>(model.params).output_logit(z);
        }
        // Linear and tree regressors predict the IoU directly; everything else is a logit.
        if (model.task == Task::regression && model.family != ModelFamily::neural_net) is_margin = false;
        out[i] = is_margin ? sigmoid(raw) : std::clamp(raw, 0.0, 1.0);
    }
    return out;
}

std::vector<double> predict(const MetaModel& model, const Matrix& x, std::span<const std::string> header) {
    if (!std::equal(header.begin(), header.end(), model.header.begin(), model.header.end())) {
        throw Error(ErrorKind::schema, fmt::format("feature header [{}] does not match model header [{}]",
                                                   fmt::join(header, ","), fmt::join(model.header, ",")));
    }
    return predict(model, x);
}

// ---------------------------------------------------------------------------
// Text serialization

namespace {

constexpr std::string_view kMagic = "metadetect-model";
constexpr int kFormatVersion = 1;

std::string num(double v) { return fmt::format("{}", v); }

void write_values(std::ostream& out, std::span<const double> values) {
    for (std::size_t i = 0; i < values.size(); ++i) out << (i ? " " : "") << num(values[i]);
    out << '\n';
}

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    std::istringstream line() {
        std::string s;
        if (!std::getline(in_, s)) fail("unexpected end of model file");
        ++line_no_;
        return std::istringstream(s);
    }

    /// Reads a line of the form "<key> <rest>" and returns <rest> as a stream.
    std::istringstream keyed(std::string_view key) {
        auto ls = line();
        std::string k;
        ls >> k;
        if (k != key) fail(fmt::format("expected '{}', found '{}'", key, k));
        return ls;
    }

    template <typename T>
    T value(std::string_view key) {
        auto ls = keyed(key);
        T v{};
        if (!(ls >> v)) fail(fmt::format("bad value for '{}'", key));
        return v;
    }

    std::vector<double> values(std::size_t count) {
        auto ls = line();
        std::vector<double> v(count);
        for (auto& x : v) {
            std::string tok;
            if (!(ls >> tok)) fail("too few values");
            x = parse_double(tok);
        }
        return v;
    }

    static double parse_double(const std::string& tok) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(tok, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != tok.size()) throw Error(ErrorKind::format, fmt::format("bad number '{}' in model file", tok));
        return v;
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw Error(ErrorKind::format, fmt::format("model file line {}: {}", line_no_, msg));
    }

private:
    std::istream& in_;
    int line_no_ = 0;
};

std::map<std::string, std::string> parse_pairs(std::istringstream ls, const Reader& r) {
    std::map<std::string, std::string> out;
    std::string tok;
    while (ls >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) r.fail(fmt::format("bad hyperparameter '{}'", tok));
        out[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    return out;
}

const std::string& need(const std::map<std::string, std::string>& kv, const std::string& key, const Reader& r) {
    const auto it = kv.find(key);
    if (it == kv.end()) r.fail(fmt::format("missing hyperparameter '{}'", key));
    return it->second;
}

}  // namespace

void save_model(const MetaModel& model, std::ostream& out) {
    out << kMagic << ' ' << kFormatVersion << '\n';
    out << "family " << to_string(model.family) << '\n';
    out << "task " << to_string(model.task) << '\n';
    out << "seed " << model.train_seed << '\n';
    out << "hyper";
    std::visit(
        [&](const auto& hp) {
            using T = std::decay_t<decltype(hp)>;
            if constexpr (std::is_same_v<T, LinearHyper>) {
                out << " ridge=" << num(hp.ridge) << " max_iterations=" << hp.max_iterations
                    << " gradient_tol=" << num(hp.gradient_tol);
            } else if constexpr (std::is_same_v<T, GbdtHyper>) {
                out << " n_trees=" << hp.n_trees << " max_depth=" << hp.max_depth
                    << " learning_rate=" << num(hp.learning_rate) << " min_leaf=" << hp.min_leaf
                    << " l2_leaf=" << num(hp.l2_leaf);
            } else {
                out << " hidden=" << fmt::format("{}", fmt::join(hp.hidden_sizes, ",")) << " epochs=" << hp.epochs
                    << " step_size=" << num(hp.step_size) << " momentum=" << num(hp.momentum)
                    << " batch_size=" << hp.batch_size;
            }
        },
        model.hyper);
    out << '\n';
    out << "columns " << model.preprocessing.mean.size() << '\n';
    out << "header " << model.header.size() << '\n';
    for (const auto& name : model.header) out << name << '\n';
    write_values(out, model.preprocessing.mean);
    write_values(out, model.preprocessing.std);

    if (const auto* lw = std::get_if<LinearWeights>(&model.params)) {
        out << "bias " << num(lw->bias) << '\n';
        write_values(out, lw->weights);
    } else if (const auto* ens = std::get_if<TreeEnsemble>(&model.params)) {
        out << "initial " << num(ens->initial_prediction) << '\n';
        out << "learning_rate " << num(ens->learning_rate) << '\n';
        out << "trees " << ens->trees.size() << '\n';
        for (const auto& t : ens->trees) {
            out << "tree " << t.nodes.size() << '\n';
            for (const auto& nd : t.nodes) {
                out << nd.feature << ' ' << num(nd.threshold) << ' ' << nd.left << ' ' << nd.right << ' '
                    << num(nd.value) << '\n';
            }
        }
    } else {
        const auto& net = std::get<NeuralNet>(model.params);
        out << "layers " << net.layers().size() << '\n';
        for (const auto& l : net.layers()) {
            out << "layer " << l.weights.rows() << ' ' << l.weights.cols() << '\n';
            for (std::size_t r = 0; r < l.weights.rows(); ++r) write_values(out, l.weights.row(r));
            write_values(out, l.bias);
        }
    }
    out << "end\n";
}

MetaModel load_model(std::istream& in) {
    Reader r(in);
    MetaModel m;
    {
        auto ls = r.keyed(kMagic);
        int version = 0;
        if (!(ls >> version) || version != kFormatVersion) r.fail("unsupported model format version");
    }
    m.family = parse_family(r.value<std::string>("family"));
    m.task = parse_task(r.value<std::string>("task"));
    m.train_seed = r.value<std::uint64_t>("seed");
    const auto kv = parse_pairs(r.keyed("hyper"), r);
    auto as_int = [&](const std::string& key) { return std::stoi(need(kv, key, r)); };
    auto as_double = [&](const std::string& key) { return Reader::parse_double(need(kv, key, r)); };
    try {
        switch (m.family) {
            case ModelFamily::linear:
                m.hyper = LinearHyper{as_double("ridge"), as_int("max_iterations"), as_double("gradient_tol")};
                break;
            case ModelFamily::gbdt:
                m.hyper = GbdtHyper{as_int("n_trees"), as_int("max_depth"), as_double("learning_rate"),
                                    as_int("min_leaf"), as_double("l2_leaf")};
                break;
            case ModelFamily::neural_net: {
                NnHyper hp;
                hp.hidden_sizes.clear();
                std::istringstream hs(need(kv, "hidden", r));
                for (std::string tok; std::getline(hs, tok, ',');) hp.hidden_sizes.push_back(std::stoi(tok));
                hp.epochs = as_int("epochs");
                hp.step_size = as_double("step_size");
                hp.momentum = as_double("momentum");
                hp.batch_size = as_int("batch_size");
                m.hyper = hp;
                break;
            }
        }
    } catch (const std::logic_error&) {
        r.fail("malformed hyperparameter value");
    }

    const auto d = r.value<std::size_t>("columns");
    const auto names = r.value<std::size_t>("header");
    if (names != 0 && names != d) r.fail("header length differs from column count");
    for (std::size_t k = 0; k < names; ++k) {
        std::string name;
        if (!(r.line() >> name)) r.fail("empty header name");
        m.header.push_back(name);
    }
    m.preprocessing.mean = r.values(d);
    m.preprocessing.std = r.values(d);

    switch (m.family) {
        case ModelFamily::linear: {
            LinearWeights w;
            w.bias = Reader::parse_double(r.value<std::string>("bias"));
            w.weights = r.values(d);
            m.params = std::move(w);
            break;
        }
        case ModelFamily::gbdt: {
            TreeEnsemble ens;
            ens.initial_prediction = Reader::parse_double(r.value<std::string>("initial"));
            ens.learning_rate = Reader::parse_double(r.value<std::string>("learning_rate"));
            const auto count = r.value<std::size_t>("trees");
            for (std::size_t t = 0; t < count; ++t) {
                RegressionTree tree;
                const auto nodes = r.value<std::size_t>("tree");
                for (std::size_t k = 0; k < nodes; ++k) {
                    auto ls = r.line();
                    RegressionTree::Node nd;
                    std::string thr, val;
                    if (!(ls >> nd.feature >> thr >> nd.left >> nd.right >> val)) r.fail("bad tree node");
                    nd.threshold = Reader::parse_double(thr);
                    nd.value = Reader::parse_double(val);
                    const bool leaf = nd.feature < 0;
                    const auto in_range = [&](int c) { return c > 0 && static_cast<std::size_t>(c) < nodes; };
                    if (!leaf && (static_cast<std::size_t>(nd.feature) >= d || !in_range(nd.left) || !in_range(nd.right))) {
                        r.fail("tree node references out of range");
                    }
                    tree.nodes.push_back(nd);
                }
                if (tree.nodes.empty()) r.fail("empty tree");
                ens.trees.push_back(std::move(tree));
            }
            m.params = std::move(ens);
            break;
        }
        case ModelFamily::neural_net: {
            NeuralNet net;
            const auto count = r.value<std::size_t>("layers");
            std::size_t fan_in = d;
            for (std::size_t li = 0; li < count; ++li) {
                auto ls = r.keyed("layer");
                std::size_t rows = 0, cols = 0;
                if (!(ls >> rows >> cols) || cols != fan_in) r.fail("layer shape mismatch");
                NeuralNet::Layer layer{Matrix(rows, cols), {}};
                for (std::size_t row = 0; row < rows; ++row) {
                    const auto v = r.values(cols);
                    std::copy(v.begin(), v.end(), layer.weights.row(row).begin());
                }
                layer.bias = r.values(rows);
                net.layers().push_back(std::move(layer));
                fan_in = rows;
            }
            if (count == 0 || fan_in != 1) r.fail("network must end in a single output unit");
            m.params = std::move(net);
            break;
        }
    }
    r.keyed("end");
    return m;
}

void save_model(const MetaModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, fmt::format("cannot write model file '{}'", path));
    save_model(model, out);
    if (!out) throw Error(ErrorKind::io, fmt::format("failed writing model file '{}'", path));
}

MetaModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, fmt::format("cannot open model file '{}'", path));
    return load_model(in);
}

}  // namespace metadetect
