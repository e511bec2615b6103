#include "bssr/bilevel.hpp"

#include <cmath>
#include <functional>
#include <string>

#include "bssr/errors.hpp"

namespace bssr {

std::pair<RegressionNet, InnerStepRecord> inner_step(const RegressionNet& net,
                                                     const UncertaintyLearner& ul,
                                                     const TriBatch& batch, double lambda,
                                                     double alpha, double alpha_head) {
    if (alpha < 0.0) throw ParamError("inner_step: alpha must be >= 0");
    if (alpha_head < 0.0) alpha_head = alpha;

    InnerEval ev = eval_inner(net, ul, batch, lambda);
    if (!ev.grad.all_finite())
        throw NumericError("inner_step: non-finite inner gradient, step aborted");

    InnerStepRecord rec;
    rec.theta_before = net.flatten();
    rec.features_unlabeled = std::move(ev.features_unlabeled);
    rec.predictions_unlabeled = std::move(ev.predictions_unlabeled);
    rec.pseudo_labels = batch.pseudo_labels;
    rec.ul_forward = std::move(ev.ul_forward);
    rec.loss = ev.loss;
    rec.lambda = lambda;
    rec.alpha_head = alpha_head;

    RegressionNet updated = apply_update(net, ev.grad, alpha, alpha_head);
    rec.theta_after = updated.flatten();
    return {std::move(updated), std::move(rec)};
}

Hypergradient hypergradient_phi(const InnerStepRecord& record, const RegressionNet& updated_net,
                                const UncertaintyLearner& ul, const TriBatch& batch,
                                double lambda) {
    const std::size_t m = batch.m();
    if (record.pseudo_labels.size() != m || record.predictions_unlabeled.size() != m)
        throw ContractError("hypergradient_phi: record does not match this batch");
    for (std::size_t j = 0; j < m; ++j)
        if (record.pseudo_labels[j] != batch.pseudo_labels[j])
            throw ContractError("hypergradient_phi: pseudo-labels differ from the record");
    if (record.lambda != lambda)
        throw ContractError("hypergradient_phi: lambda differs from the record");

    Hypergradient hg;
    hg.per_sample_scalar.assign(m, 0.0);
    if (m == 0 || lambda == 0.0) {
        hg.phi_grad = ul.mlp.zeros_like();
        return hg;
    }

    const NetGrad outer_grad = grad_outer_theta(updated_net, batch.outer_x, batch.outer_y);
    const std::vector<double>& v_w = outer_grad.head_weights;
    const double v_b = outer_grad.head_bias;

    for (std::size_t j = 0; j < m; ++j) {
        const double z = record.ul_forward.z[j];
        const double resid = record.predictions_unlabeled[j] - record.pseudo_labels[j];
        const double proj = dot(record.features_unlabeled.row(j), v_w) + v_b;
        hg.per_sample_scalar[j] =
            record.alpha_head * lambda * 2.0 * std::exp(-z) * resid * proj;
    }
    hg.phi_grad = backward_uncertainty(ul, record.ul_forward, hg.per_sample_scalar);
    return hg;
}

UncertaintyLearner outer_step(const UncertaintyLearner& ul, const Hypergradient& hypergrad,
                              double beta) {
    if (beta < 0.0) throw ParamError("outer_step: beta must be >= 0");
    for (const auto& l : hypergrad.phi_grad.layers) {
        if (!l.weights.all_finite())
            throw NumericError("outer_step: non-finite hypergradient");
        for (double b : l.bias)
            if (!std::isfinite(b)) throw NumericError("outer_step: non-finite hypergradient");
    }
    UncertaintyLearner out = ul;
    out.mlp.add_scaled(hypergrad.phi_grad, -beta);
    return out;
}

double alignment_score(const RegressionNet& net, const UncertaintyLearner& ul,
                       const TriBatch& batch, double lambda) {
    const NetGrad gi = grad_inner_theta(net, ul, batch, lambda);
    const NetGrad go = grad_outer_theta(net, batch.outer_x, batch.outer_y);
    return -dot(gi.flatten(), go.flatten());
}

// Central differences over a flat parameter vector.
static std::vector<double> fd_grad_flat(const std::function<double(const std::vector<double>&)>& f,
                                        std::vector<double> x, double h) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + h;
        const double fp = f(x);
        x[i] = orig - h;
        const double fm = f(x);
        x[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("fd_grad: non-finite probe at coordinate " + std::to_string(i));
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

Theorem1Result theorem1_equivalence(const RegressionNet& net, const UncertaintyLearner& ul,
                                    const TriBatch& batch, double lambda, double alpha) {
    // The probed functions are O(1) but their phi-derivatives are O(alpha);
    // a wider step than the usual 1e-6 keeps roundoff well below the O(alpha^2)
    // Taylor residual this diagnostic is meant to expose.
    const double h = 1e-3;
    const std::vector<double> phi0 = ul.flatten();

    auto lhs_fn = [&](const std::vector<double>& phi) {
        UncertaintyLearner u = ul;
        u.unflatten(phi);
        auto [updated, rec] = inner_step(net, u, batch, lambda, alpha);
        return outer_loss(updated, batch.outer_x, batch.outer_y);
    };
    auto rhs_fn = [&](const std::vector<double>& phi) {
        UncertaintyLearner u = ul;
        u.unflatten(phi);
        return alignment_score(net, u, batch, lambda);
    };

    Theorem1Result res;
    res.lhs = fd_grad_flat(lhs_fn, phi0, h);
    res.rhs = fd_grad_flat(rhs_fn, phi0, h);
    for (double& v : res.rhs) v *= alpha;

    const double denom = std::max(max_abs(res.lhs), max_abs(res.rhs));
    res.rel_err = denom > 0.0 ? max_abs_diff(res.lhs, res.rhs) / denom : 0.0;
    return res;
}

}  // namespace bssr
