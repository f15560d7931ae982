#pragma once

#include "metadetect/matrix.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace metadetect {

enum class ModelFamily { linear, gbdt, neural_net };
enum class Task { classification, regression };

std::string_view to_string(ModelFamily f) noexcept;
std::string_view to_string(Task t) noexcept;
/// Accepts "lr", "gb", "nn"; Error(config) otherwise.
ModelFamily parse_family(std::string_view s);
/// Accepts "classification", "regression"; Error(config) otherwise.
Task parse_task(std::string_view s);

/// Per-feature z-scoring fitted on training data. Constant columns map to 0.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> std;

    static Standardizer fit(const Matrix& x);
    Matrix apply(const Matrix& x) const;
    void apply_row(std::span<const double> in, std::span<double> out) const;
};

// ---------------------------------------------------------------------------
// Hyperparameters

struct LinearHyper {
    double ridge = 1e-6;         ///< damping for the least-squares normal equations
    int max_iterations = 5000;   ///< logistic gradient descent cap
    double gradient_tol = 1e-6;  ///< logistic convergence tolerance on ||grad||
};

struct GbdtHyper {
    int n_trees = 100;
    int max_depth = 3;
    double learning_rate = 0.1;
    int min_leaf = 5;
    double l2_leaf = 1.0;  ///< Newton leaf regularizer, classification only
};

struct NnHyper {
    std::vector<int> hidden_sizes{50, 50};
    int epochs = 200;
    double step_size = 1e-3;
    double momentum = 0.9;
    int batch_size = 64;
};

using Hyperparameters = std::variant<LinearHyper, GbdtHyper, NnHyper>;

// ---------------------------------------------------------------------------
// Parameters

struct LinearWeights {
    std::vector<double> weights;  ///< on standardized features
    double bias = 0.0;
};

/// Binary regression tree stored as a flat node array; node 0 is the root.
struct RegressionTree {
    struct Node {
        int feature = -1;  ///< -1 marks a leaf
        double threshold = 0.0;  ///< x[feature] <= threshold goes left
        int left = -1;
        int right = -1;
        double value = 0.0;  ///< leaf output
    };
    std::vector<Node> nodes;

    double predict(std::span<const double> x) const noexcept;
    int depth() const noexcept;
};

struct TreeEnsemble {
    std::vector<RegressionTree> trees;
    double learning_rate = 0.1;
    double initial_prediction = 0.0;
    /// Training loss before any tree (index 0) and after each round; not serialized.
    std::vector<double> train_loss;

    /// Raw additive score (margin for classification).
    double margin(std::span<const double> x) const noexcept;
};

/// Fully connected network: ReLU hidden layers, one logistic output unit.
class NeuralNet {
public:
    struct Layer {
        Matrix weights;  ///< out x in
        std::vector<double> bias;
    };

    NeuralNet() = default;
    /// Variance-scaled uniform initialization, biases zero.
    NeuralNet(std::size_t inputs, std::span<const int> hidden_sizes, std::uint64_t seed);

    const std::vector<Layer>& layers() const noexcept { return layers_; }
    std::vector<Layer>& layers() noexcept { return layers_; }

    std::size_t parameter_count() const noexcept;
    std::vector<double> parameters() const;
    void set_parameters(std::span<const double> flat);

    /// Pre-activation of the output unit.
    double output_logit(std::span<const double> x) const;
    /// Logistic of output_logit.
    double predict(std::span<const double> x) const;

    /// Mean loss over the batch and its gradient w.r.t. parameters() order.
    /// Classification: cross-entropy. Regression: 0.5 * (sigmoid - y)^2.
    double loss_and_gradient(const Matrix& x, std::span<const double> y, Task task, std::vector<double>& grad) const;
    double loss(const Matrix& x, std::span<const double> y, Task task) const;

private:
    std::vector<Layer> layers_;
};

using ModelParameters = std::variant<LinearWeights, TreeEnsemble, NeuralNet>;

/// A trained meta classifier or regressor.
struct MetaModel {
    ModelFamily family = ModelFamily::linear;
    Task task = Task::regression;
    std::vector<std::string> header;
    Standardizer preprocessing;
    Hyperparameters hyper;
    ModelParameters params;
    std::uint64_t train_seed = 0;
};

/// Ridge least squares (regression) or logistic regression by gradient descent.
MetaModel fit_linear(const Matrix& x, std::span<const double> y, Task task, const LinearHyper& hp = {},
                     std::vector<std::string> header = {});

/// Stagewise tree boosting: squared loss for regression, logistic loss with
/// Newton leaves for classification. Deterministic.
MetaModel fit_gbdt(const Matrix& x, std::span<const double> y, Task task, const GbdtHyper& hp = {},
                   std::vector<std::string> header = {});

/// Two-hidden-layer (by default) ReLU network trained by momentum SGD.
MetaModel fit_nn(const Matrix& x, std::span<const double> y, Task task, const NnHyper& hp, std::uint64_t seed,
                 std::vector<std::string> header = {});

/// Dispatch on family with default hyperparameters.
MetaModel fit(ModelFamily family, const Matrix& x, std::span<const double> y, Task task, std::uint64_t seed,
              std::vector<std::string> header = {});

/// Probabilities of is_tp (classification) or IoU estimates clipped to [0,1].
/// Error(schema) if the column count differs from training.
std::vector<double> predict(const MetaModel& model, const Matrix& x);
/// As above, additionally requiring `header` to equal the training header.
std::vector<double> predict(const MetaModel& model, const Matrix& x, std::span<const std::string> header);

void save_model(const MetaModel& model, std::ostream& out);
MetaModel load_model(std::istream& in);
void save_model(const MetaModel& model, const std::string& path);
MetaModel load_model(const std::string& path);

double sigmoid(double z) noexcept;

}  // namespace metadetect
