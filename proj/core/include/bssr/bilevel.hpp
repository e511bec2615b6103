#pragma once

#include <utility>

#include "bssr/objectives.hpp"

namespace bssr {

// Everything the closed-form hypergradient needs from the inner step:
// pre-update strong-view features/predictions/log-variances and the step
// sizes that scaled the head update.
struct InnerStepRecord {
    std::vector<double> theta_before;
    std::vector<double> theta_after;
    Matrix features_unlabeled;               // h_j under theta^t
    std::vector<double> predictions_unlabeled;  // r_j under theta^t
    std::vector<double> pseudo_labels;
    UncertaintyForward ul_forward;           // z_j and cache for backward
    InnerLossBreakdown loss;
    double lambda = 0.0;
    double alpha_head = 0.0;
};

// One plain gradient-descent step on all of theta (Eq.-7-style update).
// alpha_head < 0 means "use alpha for the head too".
std::pair<RegressionNet, InnerStepRecord> inner_step(const RegressionNet& net,
                                                     const UncertaintyLearner& ul,
                                                     const TriBatch& batch, double lambda,
                                                     double alpha, double alpha_head = -1.0);

struct Hypergradient {
    MlpParams phi_grad;
    // s_j: the scalar multiplying grad_phi z_j for unlabeled sample j.
    std::vector<double> per_sample_scalar;
};

// Closed-form outer gradient under the head-only unroll:
//   v   = head block of grad_outer_theta at theta^{t+1} on the outer batch
//   s_j = alpha_head * lambda * 2 e^{-z_j} (r_j - yhat_j) * <[h_j;1], v>
//   grad_phi L^outer = sum_j s_j * grad_phi z_j
// with h_j, r_j, z_j the pre-update strong-view values from the record.
Hypergradient hypergradient_phi(const InnerStepRecord& record, const RegressionNet& updated_net,
                                const UncertaintyLearner& ul, const TriBatch& batch,
                                double lambda);

UncertaintyLearner outer_step(const UncertaintyLearner& ul, const Hypergradient& hypergrad,
                              double beta);

// -<grad_theta L^inner, grad_theta L^outer> over the full flattened theta.
double alignment_score(const RegressionNet& net, const UncertaintyLearner& ul,
                       const TriBatch& batch, double lambda);

struct Theorem1Result {
    std::vector<double> lhs;  // fd grad_phi of outer_loss(theta^{t+1}(phi))
    std::vector<double> rhs;  // alpha * fd grad_phi of alignment_score
    double rel_err = 0.0;     // ||lhs-rhs||_inf / max(||lhs||_inf, ||rhs||_inf)
};

Theorem1Result theorem1_equivalence(const RegressionNet& net, const UncertaintyLearner& ul,
                                    const TriBatch& batch, double lambda, double alpha);

}  // namespace bssr
