#include "bssr/objectives.hpp"

#include <cmath>
#include <string>

#include "bssr/errors.hpp"

namespace bssr {

double supervised_loss(std::span<const double> predictions, std::span<const double> targets) {
    if (predictions.size() != targets.size())
        throw ShapeError("supervised_loss: length mismatch");
    if (predictions.empty())
        throw ParamError("supervised_loss: empty batch");
    double s = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double d = targets[i] - predictions[i];
        s += d * d;
    }
    return s;
}

double unsup_nll(std::span<const double> predictions, std::span<const double> pseudo_labels,
                 std::span<const double> z) {
    if (predictions.size() != pseudo_labels.size() || predictions.size() != z.size())
        throw ShapeError("unsup_nll: length mismatch");
    double fit = 0.0;
    double reg = 0.0;
    for (std::size_t j = 0; j < predictions.size(); ++j) {
        if (!std::isfinite(z[j]))
            throw NumericError("unsup_nll: non-finite z at sample " + std::to_string(j));
        const double d = pseudo_labels[j] - predictions[j];
        fit += std::exp(-z[j]) * d * d;
        reg += z[j];
    }
    return fit + reg;
}

InnerLossBreakdown inner_loss(const RegressionNet& net, const UncertaintyLearner& ul,
                              const TriBatch& batch, double lambda) {
    return eval_inner(net, ul, batch, lambda).loss;
}

double outer_loss(const RegressionNet& net, const Matrix& outer_x,
                  std::span<const double> outer_y) {
    if (outer_y.empty()) throw ParamError("outer_loss: empty batch");
    const auto fwd = forward_regression(net, outer_x);
    return supervised_loss(fwd.predictions, outer_y);
}

InnerEval eval_inner(const RegressionNet& net, const UncertaintyLearner& ul,
                     const TriBatch& batch, double lambda) {
    InnerEval ev;
    ev.loss.lambda = lambda;

    auto fwd_l = forward_regression(net, batch.labeled_x);
    ev.loss.l_sup = supervised_loss(fwd_l.predictions, batch.labeled_y);
    std::vector<double> grads_l(batch.n());
    for (std::size_t i = 0; i < batch.n(); ++i)
        grads_l[i] = 2.0 * (fwd_l.predictions[i] - batch.labeled_y[i]);
    ev.grad = backward_regression(net, fwd_l, grads_l);

    if (batch.m() > 0) {
        auto fwd_u = forward_regression(net, batch.unlabeled_strong);
        ev.ul_forward = forward_uncertainty(ul, fwd_u.predictions, batch.pseudo_labels,
                                            batch.target_mean, batch.target_std);
        const auto& z = ev.ul_forward.z;
        for (std::size_t j = 0; j < batch.m(); ++j) {
            const double d = batch.pseudo_labels[j] - fwd_u.predictions[j];
            ev.loss.l_unsup_fit += std::exp(-z[j]) * d * d;
            ev.loss.l_unsup_reg += z[j];
        }
        if (lambda != 0.0) {
            std::vector<double> grads_u(batch.m());
            for (std::size_t j = 0; j < batch.m(); ++j)
                grads_u[j] = 2.0 * lambda * std::exp(-z[j]) *
                             (fwd_u.predictions[j] - batch.pseudo_labels[j]);
            const NetGrad gu = backward_regression(net, fwd_u, grads_u);
            ev.grad.add_scaled(gu, 1.0);
        }
        ev.features_unlabeled = std::move(fwd_u.features);
        ev.predictions_unlabeled = std::move(fwd_u.predictions);
    } else {
        ev.features_unlabeled = Matrix(0, net.feature_dim());
    }

    ev.loss.total = ev.loss.l_sup + lambda * (ev.loss.l_unsup_fit + ev.loss.l_unsup_reg);
    return ev;
}

NetGrad grad_inner_theta(const RegressionNet& net, const UncertaintyLearner& ul,
                         const TriBatch& batch, double lambda) {
    return eval_inner(net, ul, batch, lambda).grad;
}

NetGrad grad_outer_theta(const RegressionNet& net, const Matrix& outer_x,
                         std::span<const double> outer_y) {
    if (outer_y.empty()) throw ParamError("grad_outer_theta: empty batch");
    const auto fwd = forward_regression(net, outer_x);
    std::vector<double> grads(outer_y.size());
    for (std::size_t k = 0; k < outer_y.size(); ++k)
        grads[k] = 2.0 * (fwd.predictions[k] - outer_y[k]);
    return backward_regression(net, fwd, grads);
}

}  // namespace bssr
