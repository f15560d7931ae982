#include "metadetect/error.hpp"
#include "metadetect/meta_model.hpp"
#include "model_internal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

namespace metadetect {
namespace {

// Splits must improve the objective by more than this.
constexpr double kMinSplitGain = 1e-12;

struct Columns {
    std::vector<std::vector<double>> values;          ///< [feature][row]
    std::vector<std::vector<std::uint32_t>> sorted;   ///< row indices by ascending value, stable
};

Columns presort(const Matrix& z) {
    Columns c;
    c.values.assign(z.cols(), std::vector<double>(z.rows()));
    for (std::size_t i = 0; i < z.rows(); ++i) {
        for (std::size_t f = 0; f < z.cols(); ++f) c.values[f][i] = z(i, f);
    }
    c.sorted.resize(z.cols());
    for (std::size_t f = 0; f < z.cols(); ++f) {
        auto& idx = c.sorted[f];
        idx.resize(z.rows());
        std::iota(idx.begin(), idx.end(), std::uint32_t{0});
        const auto& col = c.values[f];
        std::stable_sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) { return col[a] < col[b]; });
    }
    return c;
}

struct NodeSums {
    double g = 0.0;
    double h = 0.0;
    std::size_t n = 0;
};

struct BestSplit {
    double gain = kMinSplitGain;
    int feature = -1;
    double threshold = 0.0;
};

double leaf_score(double g, double h, double lambda) { return g * g / (h + lambda); }

/// Grows one tree level by level on gradients g and hessians h. Returns the
/// tree (leaf values unset) and fills `leaf_of` with each row's leaf node.
RegressionTree grow_tree(const Columns& cols, std::span<const double> g, std::span<const double> h,
                         const GbdtHyper& hp, double lambda, std::vector<int>& leaf_of) {
    const std::size_t n = g.size();
    const std::size_t d = cols.values.size();
    RegressionTree tree;
    tree.nodes.emplace_back();
    leaf_of.assign(n, 0);

    std::vector<int> frontier{0};
    for (int depth = 0; depth < hp.max_depth && !frontier.empty(); ++depth) {
        std::vector<int> slot(tree.nodes.size(), -1);
        for (std::size_t k = 0; k < frontier.size(); ++k) slot[static_cast<std::size_t>(frontier[k])] = static_cast<int>(k);

        std::vector<NodeSums> total(frontier.size());
        for (std::size_t i = 0; i < n; ++i) {
            const int s = slot[static_cast<std::size_t>(leaf_of[i])];
            if (s < 0) continue;
            total[static_cast<std::size_t>(s)].g += g[i];
            total[static_cast<std::size_t>(s)].h += h[i];
            total[static_cast<std::size_t>(s)].n += 1;
        }

        std::vector<BestSplit> best(frontier.size());
        std::vector<NodeSums> left(frontier.size());
        std::vector<double> last(frontier.size());
        for (std::size_t f = 0; f < d; ++f) {
            std::fill(left.begin(), left.end(), NodeSums{});
            const auto& col = cols.values[f];
            for (std::uint32_t i : cols.sorted[f]) {
                const int si = slot[static_cast<std::size_t>(leaf_of[i])];
                if (si < 0) continue;
                const auto s = static_cast<std::size_t>(si);
                const double v = col[i];
                NodeSums& l = left[s];
                if (l.n > 0 && v != last[s]) {
                    const NodeSums& t = total[s];
                    const std::size_t n_right = t.n - l.n;
                    if (l.n >= static_cast<std::size_t>(hp.min_leaf) && n_right >= static_cast<std::size_t>(hp.min_leaf)) {
                        const double gain = leaf_score(l.g, l.h, lambda) + leaf_score(t.g - l.g, t.h - l.h, lambda) -
                                            leaf_score(t.g, t.h, lambda);
                        if (gain > best[s].gain) best[s] = {gain, static_cast<int>(f), last[s]};
                    }
                }
                l.g += g[i];
                l.h += h[i];
                l.n += 1;
                last[s] = v;
            }
        }

        std::vector<int> next;
        for (std::size_t s = 0; s < frontier.size(); ++s) {
            if (best[s].feature < 0) continue;
            const auto node = static_cast<std::size_t>(frontier[s]);
            const int l = static_cast<int>(tree.nodes.size());
            tree.nodes.emplace_back();
            tree.nodes.emplace_back();
            tree.nodes[node].feature = best[s].feature;
            tree.nodes[node].threshold = best[s].threshold;
            tree.nodes[node].left = l;
            tree.nodes[node].right = l + 1;
            next.push_back(l);
            next.push_back(l + 1);
        }
        for (std::size_t i = 0; i < n; ++i) {
            const auto node = static_cast<std::size_t>(leaf_of[i]);
            if (node >= slot.size() || slot[node] < 0) continue;
            const auto& nd = tree.nodes[node];
            if (nd.feature < 0) continue;
            leaf_of[i] = cols.values[static_cast<std::size_t>(nd.feature)][i] <= nd.threshold ? nd.left : nd.right;
        }
        frontier = std::move(next);
    }
    return tree;
}

double log_loss_term(double margin, double y) {
    // log(1 + e^m) - y*m, stable for large |m|.
    const double softplus = margin > 0.0 ? margin + std::log1p(std::exp(-margin)) : std::log1p(std::exp(margin));
    return softplus - y * margin;
}

double training_loss(std::span<const double> margin, std::span<const double> y, Task task) {
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        sum += task == Task::regression ? (margin[i] - y[i]) * (margin[i] - y[i]) : log_loss_term(margin[i], y[i]);
    }
    return sum / static_cast<double>(y.size());
}

}  // namespace

double RegressionTree::predict(std::span<const double> x) const noexcept {
    std::size_t node = 0;
    while (nodes[node].feature >= 0) {
        const auto& nd = nodes[node];
        node = static_cast<std::size_t>(x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right);
    }
    return nodes[node].value;
}

int RegressionTree::depth() const noexcept {
    if (nodes.empty()) return 0;
    std::vector<int> level(nodes.size(), 0);
    int deepest = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i].feature < 0) continue;
        for (int child : {nodes[i].left, nodes[i].right}) {
            level[static_cast<std::size_t>(child)] = level[i] + 1;
            deepest = std::max(deepest, level[i] + 1);
        }
    }
    return deepest;
}

double TreeEnsemble::margin(std::span<const double> x) const noexcept {
    double sum = 0.0;
    for (const auto& t : trees) sum += t.predict(x);
    return initial_prediction + learning_rate * sum;
}

MetaModel fit_gbdt(const Matrix& x, std::span<const double> y, Task task, const GbdtHyper& hp,
                   std::vector<std::string> header) {
    if (hp.n_trees <= 0 || hp.max_depth <= 0 || !(hp.learning_rate > 0.0) || hp.min_leaf <= 0 || hp.l2_leaf < 0.0) {
        throw Error(ErrorKind::config, "gradient boosting hyperparameters must be positive");
    }
    detail::check_fit_inputs(x, y, task);

    MetaModel model;
    model.family = ModelFamily::gbdt;
    model.task = task;
    model.header = std::move(header);
    model.preprocessing = Standardizer::fit(x);
    model.hyper = hp;
    const Matrix z = model.preprocessing.apply(x);
    const Columns cols = presort(z);
    const std::size_t n = z.rows();

    TreeEnsemble ens;
    ens.learning_rate = hp.learning_rate;
    const double mean_y = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    if (task == Task::regression) {
        ens.initial_prediction = mean_y;
    } else {
        const double p = std::clamp(mean_y, 1e-6, 1.0 - 1e-6);
        ens.initial_prediction = std::log(p / (1.0 - p));
    }
    const double lambda = task == Task::regression ? 0.0 : hp.l2_leaf;

    std::vector<double> margin(n, ens.initial_prediction);
    std::vector<double> g(n), h(n, 1.0);
    std::vector<int> leaf_of;
    ens.train_loss.push_back(training_loss(margin, y, task));

    for (int round = 0; round < hp.n_trees; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            if (task == Task::regression) {
                g[i] = margin[i] - y[i];
            } else {
                const double p = sigmoid(margin[i]);
                g[i] = p - y[i];
                h[i] = p * (1.0 - p);
            }
        }
        RegressionTree tree = grow_tree(cols, g, h, hp, lambda, leaf_of);

        std::vector<std::vector<std::size_t>> members(tree.nodes.size());
        for (std::size_t i = 0; i < n; ++i) members[static_cast<std::size_t>(leaf_of[i])].push_back(i);

        for (std::size_t node = 0; node < tree.nodes.size(); ++node) {
            if (tree.nodes[node].feature >= 0 || members[node].empty()) continue;
            double gs = 0.0, hs = 0.0;
            for (std::size_t i : members[node]) {
                gs += g[i];
                hs += h[i];
            }
            const double newton = -gs / (hs + lambda);
            double step = hp.learning_rate * newton;
            if (task == Task::classification) {
                // Halve the step until the leaf's log loss does not increase.
                auto leaf_loss = [&](double delta) {
                    double sum = 0.0;
                    for (std::size_t i : members[node]) sum += log_loss_term(margin[i] + delta, y[i]);
                    return sum;
                };
                const double base = leaf_loss(0.0);
                int halvings = 0;
                while (leaf_loss(step) > base && halvings < 60) {
                    step *= 0.5;
                    ++halvings;
                }
                if (halvings == 60) step = 0.0;
            }
            tree.nodes[node].value = step / hp.learning_rate;
            for (std::size_t i : members[node]) margin[i] += step;
        }
        ens.train_loss.push_back(training_loss(margin, y, task));
        ens.trees.push_back(std::move(tree));
    }
    model.params = std::move(ens);
    return model;
}

}  // namespace metadetect
