#include "metadetect/error.hpp"
#include "metadetect/meta_model.hpp"
#include "model_internal.hpp"

#include <algorithm>
#include <cmath>

namespace metadetect {
namespace {

/// Solves the symmetric positive definite system a * x = b in place (b becomes x).
void cholesky_solve(Matrix a, std::vector<double>& b) {
    const std::size_t n = a.rows();
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
        if (!(d > 0.0)) throw Error(ErrorKind::data, "normal equations are not positive definite");
        const double l = std::sqrt(d);
        a(j, j) = l;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
            a(i, j) = s / l;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= a(i, k) * b[k];
        b[i] = s / a(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= a(k, i) * b[k];
        b[i] = s / a(i, i);
    }
}

LinearWeights fit_ridge(const Matrix& z, std::span<const double> y, double ridge) {
    const std::size_t n = z.rows(), d = z.cols();
    // Augmented design [z, 1]; the intercept is not damped.
    Matrix gram(d + 1, d + 1);
    std::vector<double> rhs(d + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = z.row(i);
        for (std::size_t a = 0; a < d; ++a) {
            for (std::size_t b = 0; b <= a; ++b) gram(a, b) += r[a] * r[b];
            gram(d, a) += r[a];
            rhs[a] += r[a] * y[i];
        }
        rhs[d] += y[i];
    }
    gram(d, d) = static_cast<double>(n);
    for (std::size_t a = 0; a <= d; ++a) {
        for (std::size_t b = 0; b < a; ++b) gram(b, a) = gram(a, b);
    }
    for (std::size_t a = 0; a < d; ++a) gram(a, a) += ridge;
    cholesky_solve(std::move(gram), rhs);
    LinearWeights w;
    w.bias = rhs[d];
    rhs.pop_back();
    w.weights = std::move(rhs);
    return w;
}

/// Largest eigenvalue of [z,1]^T [z,1] / n by power iteration.
double gram_spectral_norm(const Matrix& z) {
    const std::size_t n = z.rows(), d = z.cols();
    std::vector<double> v(d + 1, 1.0 / std::sqrt(static_cast<double>(d + 1))), w(d + 1);
    double lambda = 1.0;
    for (int it = 0; it < 100; ++it) {
        std::fill(w.begin(), w.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto r = z.row(i);
            double dot = v[d];
            for (std::size_t j = 0; j < d; ++j) dot += r[j] * v[j];
            for (std::size_t j = 0; j < d; ++j) w[j] += dot * r[j];
            w[d] += dot;
        }
        double norm = 0.0;
        for (double& x : w) {
            x /= static_cast<double>(n);
            norm += x * x;
        }
        norm = std::sqrt(norm);
        if (norm == 0.0) break;
        const double prev = lambda;
        lambda = norm;
        for (std::size_t j = 0; j <= d; ++j) v[j] = w[j] / norm;
        if (std::abs(lambda - prev) <= 1e-9 * lambda) break;
    }
    return lambda;
}

LinearWeights fit_logistic(const Matrix& z, std::span<const double> y, const LinearHyper& hp) {
    const std::size_t n = z.rows(), d = z.cols();
    // Logistic loss curvature is at most 1/4 of the Gram spectrum.
    const double step = 1.0 / (0.25 * gram_spectral_norm(z) * 1.01);
    LinearWeights w{std::vector<double>(d, 0.0), 0.0};
    std::vector<double> grad(d + 1);
    for (int it = 0; it < hp.max_iterations; ++it) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto r = z.row(i);
            double m = w.bias;
            for (std::size_t j = 0; j < d; ++j) m += w.weights[j] * r[j];
            const double e = sigmoid(m) - y[i];
            for (std::size_t j = 0; j < d; ++j) grad[j] += e * r[j];
            grad[d] += e;
        }
        double norm = 0.0;
        for (double& g : grad) {
            g /= static_cast<double>(n);
            norm += g * g;
        }
        if (std::sqrt(norm) < hp.gradient_tol) break;
        for (std::size_t j = 0; j < d; ++j) w.weights[j] -= step * grad[j];
        w.bias -= step * grad[d];
    }
    return w;
}

}  // namespace

MetaModel fit_linear(const Matrix& x, std::span<const double> y, Task task, const LinearHyper& hp,
                     std::vector<std::string> header) {
    detail::check_fit_inputs(x, y, task);
    if (hp.max_iterations < 0 || !(hp.ridge >= 0.0)) throw Error(ErrorKind::config, "invalid linear hyperparameters");
    if (task == Task::classification) {
        const bool all_same = std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
        if (all_same) throw Error(ErrorKind::data, "classification targets are all the same class");
    }
    MetaModel model;
    model.family = ModelFamily::linear;
    model.task = task;
    model.header = std::move(header);
    model.preprocessing = Standardizer::fit(x);
    model.hyper = hp;
    const Matrix z = model.preprocessing.apply(x);
    model.params = task == Task::regression ? fit_ridge(z, y, hp.ridge) : fit_logistic(z, y, hp);
    return model;
}

}  // namespace metadetect
