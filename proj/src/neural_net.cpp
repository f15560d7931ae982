#include "metadetect/error.hpp"
#include "metadetect/meta_model.hpp"
#include "model_internal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace metadetect {
namespace {

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sample_loss(double logit, double y, Task task) {
    if (task == Task::classification) return softplus(logit) - y * logit;
    const double e = sigmoid(logit) - y;
    return 0.5 * e * e;
}

/// d(sample_loss)/d(logit).
double output_delta(double logit, double y, Task task) {
    const double p = sigmoid(logit);
    if (task == Task::classification) return p - y;
    return (p - y) * p * (1.0 - p);
}

}  // namespace

NeuralNet::NeuralNet(std::size_t inputs, std::span<const int> hidden_sizes, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::size_t fan_in = inputs;
    std::vector<std::size_t> widths;
    for (int h : hidden_sizes) widths.push_back(static_cast<std::size_t>(h));
    widths.push_back(1);
    for (std::size_t width : widths) {
        Layer layer{Matrix(width, fan_in), std::vector<double>(width, 0.0)};
        const double limit = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (std::size_t r = 0; r < width; ++r) {
            for (double& w : layer.weights.row(r)) w = dist(rng);
        }
        layers_.push_back(std::move(layer));
        fan_in = width;
    }
}

std::size_t NeuralNet::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weights.rows() * l.weights.cols() + l.bias.size();
    return n;
}

std::vector<double> NeuralNet::parameters() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (const auto& l : layers_) {
        flat.insert(flat.end(), l.weights.data().begin(), l.weights.data().end());
        flat.insert(flat.end(), l.bias.begin(), l.bias.end());
    }
    return flat;
}

void NeuralNet::set_parameters(std::span<const double> flat) {
    if (flat.size() != parameter_count()) throw Error(ErrorKind::schema, "parameter vector has the wrong length");
    std::size_t k = 0;
    for (auto& l : layers_) {
        for (std::size_t r = 0; r < l.weights.rows(); ++r) {
            for (double& w : l.weights.row(r)) w = flat[k++];
        }
        for (double& b : l.bias) b = flat[k++];
    }
}

double NeuralNet::output_logit(std::span<const double> x) const {
    std::vector<double> a(x.begin(), x.end()), z;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
        const auto& l = layers_[li];
        z.assign(l.bias.begin(), l.bias.end());
        for (std::size_t r = 0; r < l.weights.rows(); ++r) {
            const auto w = l.weights.row(r);
            z[r] += std::inner_product(w.begin(), w.end(), a.begin(), 0.0);
        }
        if (li + 1 < layers_.size()) {
            for (double& v : z) v = std::max(v, 0.0);
        }
        a.swap(z);
    }
    return a.at(0);
}

double NeuralNet::predict(std::span<const double> x) const { return sigmoid(output_logit(x)); }

double NeuralNet::loss(const Matrix& x, std::span<const double> y, Task task) const {
    double sum = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) sum += sample_loss(output_logit(x.row(i)), y[i], task);
    return sum / static_cast<double>(x.rows());
}

double NeuralNet::loss_and_gradient(const Matrix& x, std::span<const double> y, Task task,
                                    std::vector<double>& grad) const {
    grad.assign(parameter_count(), 0.0);
    std::vector<std::size_t> offset;
    std::size_t k = 0;
    for (const auto& l : layers_) {
        offset.push_back(k);
        k += l.weights.rows() * l.weights.cols() + l.bias.size();
    }

    const std::size_t depth = layers_.size();
    std::vector<std::vector<double>> act(depth + 1);  // act[0] = input, act[l+1] = output of layer l
    std::vector<std::vector<double>> pre(depth);
    std::vector<double> delta, prev_delta;
    double total = 0.0;

    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto xi = x.row(i);
        act[0].assign(xi.begin(), xi.end());
        for (std::size_t li = 0; li < depth; ++li) {
            const auto& l = layers_[li];
            pre[li].assign(l.bias.begin(), l.bias.end());
            for (std::size_t r = 0; r < l.weights.rows(); ++r) {
                const auto w = l.weights.row(r);
                pre[li][r] += std::inner_product(w.begin(), w.end(), act[li].begin(), 0.0);
            }
            act[li + 1] = pre[li];
            if (li + 1 < depth) {
                for (double& v : act[li + 1]) v = std::max(v, 0.0);
            }
        }
        const double logit = pre[depth - 1][0];
        total += sample_loss(logit, y[i], task);

        delta.assign(1, output_delta(logit, y[i], task));
        for (std::size_t li = depth; li-- > 0;) {
            const auto& l = layers_[li];
            const std::size_t in = l.weights.cols();
            double* gw = grad.data() + offset[li];
            double* gb = gw + l.weights.rows() * in;
            for (std::size_t r = 0; r < l.weights.rows(); ++r) {
                const double dr = delta[r];
                if (dr == 0.0) continue;
                for (std::size_t c = 0; c < in; ++c) gw[r * in + c] += dr * act[li][c];
                gb[r] += dr;
            }
            if (li == 0) break;
            prev_delta.assign(in, 0.0);
            for (std::size_t r = 0; r < l.weights.rows(); ++r) {
                const auto w = l.weights.row(r);
                for (std::size_t c = 0; c < in; ++c) prev_delta[c] += w[c] * delta[r];
            }
            for (std::size_t c = 0; c < in; ++c) {
                if (!(pre[li - 1][c] > 0.0)) prev_delta[c] = 0.0;
            }
            delta.swap(prev_delta);
        }
    }
    const double scale = 1.0 / static_cast<double>(x.rows());
    for (double& gval : grad) gval *= scale;
    return total * scale;
}

MetaModel fit_nn(const Matrix& x, std::span<const double> y, Task task, const NnHyper& hp, std::uint64_t seed,
                 std::vector<std::string> header) {
    if (hp.hidden_sizes.empty()) throw Error(ErrorKind::config, "neural network needs at least one hidden layer");
    if (std::any_of(hp.hidden_sizes.begin(), hp.hidden_sizes.end(), [](int h) { return h <= 0; }) ||
        hp.epochs < 0 || hp.batch_size <= 0 || !(hp.step_size > 0.0) || !(hp.momentum >= 0.0 && hp.momentum < 1.0)) {
        throw Error(ErrorKind::config, "invalid neural network hyperparameters");
    }
    detail::check_fit_inputs(x, y, task);

    MetaModel model;
    model.family = ModelFamily::neural_net;
    model.task = task;
    model.header = std::move(header);
    model.preprocessing = Standardizer::fit(x);
    model.hyper = hp;
    model.train_seed = seed;
    const Matrix z = model.preprocessing.apply(x);

    NeuralNet net(z.cols(), hp.hidden_sizes, seed);
    std::vector<double> params = net.parameters();
    std::vector<double> velocity(params.size(), 0.0);
    std::vector<double> grad;

    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(z.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto batch = static_cast<std::size_t>(hp.batch_size);

    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            Matrix xb(end - start, z.cols());
            std::vector<double> yb(end - start);
            for (std::size_t b = start; b < end; ++b) {
                std::copy(z.row(order[b]).begin(), z.row(order[b]).end(), xb.row(b - start).begin());
                yb[b - start] = y[order[b]];
            }
            net.loss_and_gradient(xb, yb, task, grad);
            for (std::size_t p = 0; p < params.size(); ++p) {
                velocity[p] = hp.momentum * velocity[p] - hp.step_size * grad[p];
                params[p] += velocity[p];
            }
            net.set_parameters(params);
        }
    }
    model.params = std::move(net);
    return model;
}

}  // namespace metadetect
