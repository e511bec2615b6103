#pragma once

#include <span>

#include "bssr/data.hpp"
#include "bssr/models.hpp"

namespace bssr {

struct InnerLossBreakdown {
    double l_sup = 0.0;
    double l_unsup_fit = 0.0;  // sum_j e^{-z_j} (yhat_j - r_j)^2
    double l_unsup_reg = 0.0;  // sum_j z_j
    double lambda = 0.0;
    double total = 0.0;        // l_sup + lambda * (l_unsup_fit + l_unsup_reg)
};

// Batch sums, not means; fixed left-to-right summation order.
double supervised_loss(std::span<const double> predictions, std::span<const double> targets);
double unsup_nll(std::span<const double> predictions, std::span<const double> pseudo_labels,
                 std::span<const double> z);

InnerLossBreakdown inner_loss(const RegressionNet& net, const UncertaintyLearner& ul,
                              const TriBatch& batch, double lambda);

double outer_loss(const RegressionNet& net, const Matrix& outer_x,
                  std::span<const double> outer_y);

// Inner-loss evaluation with everything downstream consumers need: the loss
// breakdown, the exact theta-gradient (pseudo-labels and z held constant),
// and the strong-view intermediates the hypergradient reuses.
struct InnerEval {
    InnerLossBreakdown loss;
    NetGrad grad;
    Matrix features_unlabeled;            // pre-update strong-view features
    std::vector<double> predictions_unlabeled;
    UncertaintyForward ul_forward;        // z and its cache
};

InnerEval eval_inner(const RegressionNet& net, const UncertaintyLearner& ul,
                     const TriBatch& batch, double lambda);

NetGrad grad_inner_theta(const RegressionNet& net, const UncertaintyLearner& ul,
                         const TriBatch& batch, double lambda);
NetGrad grad_outer_theta(const RegressionNet& net, const Matrix& outer_x,
                         std::span<const double> outer_y);

}  // namespace bssr
