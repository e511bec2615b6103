#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bssr/matrix.hpp"
#include "bssr/rng.hpp"

namespace bssr {

enum class Activation { Relu, Identity };

struct MlpLayer {
    Matrix weights;  // input_dim x output_dim
    std::vector<double> bias;
    Activation act = Activation::Relu;
};

// A plain dense MLP parameter block. Also doubles as the gradient container
// (same shapes). Flatten order: per layer, weights row-major then bias.
struct MlpParams {
    std::vector<MlpLayer> layers;

    std::size_t input_dim() const;
    std::size_t output_dim() const;
    std::size_t param_count() const;

    std::vector<double> flatten() const;
    void unflatten(std::span<const double> flat);

    // this += scale * other (matching shapes required)
    void add_scaled(const MlpParams& other, double scale);
    MlpParams zeros_like() const;

    // Throws ShapeError unless consecutive layer dims chain.
    void validate() const;
};

struct MlpCache {
    Matrix input;
    std::vector<Matrix> pre;   // pre-activations per layer
    std::vector<Matrix> post;  // activations per layer
};

Matrix mlp_forward(const MlpParams& params, const Matrix& x, MlpCache* cache = nullptr);
// Returns parameter gradients; optionally the gradient w.r.t. the input.
MlpParams mlp_backward(const MlpParams& params, const MlpCache& cache,
                       const Matrix& output_grads, Matrix* input_grads = nullptr);

// Regression network: MLP feature extractor plus a single linear head
// producing one scalar per sample. The head is the only parameter block the
// bi-level engine unrolls through.
struct RegressionNet {
    MlpParams extractor;
    std::vector<double> head_weights;  // feature_dim
    double head_bias = 0.0;

    std::size_t input_dim() const { return extractor.input_dim(); }
    std::size_t feature_dim() const { return head_weights.size(); }
    std::size_t param_count() const;
    // Flatten order: extractor, then head weights, then head bias. The head
    // block is the trailing feature_dim + 1 entries.
    std::size_t head_offset() const { return extractor.param_count(); }
    std::vector<double> flatten() const;
    void unflatten(std::span<const double> flat);
};

// Gradient (or any tangent) in RegressionNet shape.
struct NetGrad {
    MlpParams extractor;
    std::vector<double> head_weights;
    double head_bias = 0.0;

    std::vector<double> flatten() const;
    void add_scaled(const NetGrad& other, double scale);
    bool all_finite() const;
};

NetGrad zero_grad_like(const RegressionNet& net);
// net := net - alpha * grad for the extractor, - alpha_head * grad for the head.
RegressionNet apply_update(const RegressionNet& net, const NetGrad& grad,
                           double alpha, double alpha_head);

struct RegressionForward {
    Matrix features;                  // batch x feature_dim
    std::vector<double> predictions;  // batch
    MlpCache cache;
};

RegressionForward forward_regression(const RegressionNet& net, const Matrix& x_batch);
// output_grads[i] = dL/dr_i. Linear in output_grads.
NetGrad backward_regression(const RegressionNet& net, const RegressionForward& fwd,
                            std::span<const double> output_grads);

RegressionNet init_regression_net(SeededRng& rng, std::size_t input_dim,
                                  const std::vector<std::size_t>& hidden_dims,
                                  std::size_t feature_dim);

// One-hidden-layer MLP mapping standardized (prediction, pseudo-label) to a
// log-variance z, clamped to [-z_max, z_max].
struct UncertaintyLearner {
    MlpParams mlp;  // 2 -> hidden -> 1
    double z_max = 6.0;

    std::size_t param_count() const { return mlp.param_count(); }
    std::vector<double> flatten() const { return mlp.flatten(); }
    void unflatten(std::span<const double> flat) { mlp.unflatten(flat); }
};

struct UncertaintyForward {
    std::vector<double> z;  // clamped
    MlpCache cache;
    std::vector<std::uint8_t> pass_mask;  // 0 where the clamp saturated
};

UncertaintyForward forward_uncertainty(const UncertaintyLearner& ul,
                                       std::span<const double> predictions,
                                       std::span<const double> pseudo_labels,
                                       double target_mean, double target_std);
// z_grads[j] = dL/dz_j; clamp-saturated samples contribute nothing.
MlpParams backward_uncertainty(const UncertaintyLearner& ul, const UncertaintyForward& fwd,
                               std::span<const double> z_grads);

UncertaintyLearner init_uncertainty_learner(SeededRng& rng, std::size_t hidden,
                                            double z_max);

}  // namespace bssr
