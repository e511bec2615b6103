#include "bssr/diagnostics.hpp"

#include <cmath>
#include <string>

#include "bssr/errors.hpp"

namespace bssr {

std::vector<double> fd_grad(const std::function<double(const std::vector<double>&)>& f,
                            std::vector<double> x, const FdConfig& cfg) {
    if (cfg.step <= 0.0) throw ParamError("fd_grad: step must be > 0");
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + cfg.step;
        const double fp = f(x);
        x[i] = orig - cfg.step;
        const double fm = f(x);
        x[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("fd_grad: non-finite probe at coordinate " + std::to_string(i));
        g[i] = (fp - fm) / (2.0 * cfg.step);
    }
    return g;
}

double grad_rel_err(std::span<const double> a, std::span<const double> b) {
    const double denom = std::max({1.0, max_abs(a), max_abs(b)});
    return max_abs_diff(a, b) / denom;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    const double na = std::sqrt(dot(a, a));
    const double nb = std::sqrt(dot(b, b));
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

std::vector<double> fd_hypergrad_phi(const RegressionNet& net, const UncertaintyLearner& ul,
                                     const TriBatch& batch, double lambda, double alpha,
                                     UnrollMode mode, const FdConfig& cfg) {
    const std::vector<double> phi0 = ul.flatten();

    if (mode == UnrollMode::Full) {
        auto f = [&](const std::vector<double>& phi) {
            UncertaintyLearner u = ul;
            u.unflatten(phi);
            auto [updated, rec] = inner_step(net, u, batch, lambda, alpha);
            return outer_loss(updated, batch.outer_x, batch.outer_y);
        };
        return fd_grad(f, phi0, cfg);
    }

    // HeadOnly: the extractor takes its update from the base phi once; only
    // the head update re-runs under the perturbed phi.
    auto [base_updated, base_rec] = inner_step(net, ul, batch, lambda, alpha);

    // phi-independent labeled contribution to the head gradient.
    const auto fwd_l = forward_regression(net, batch.labeled_x);
    std::vector<double> head_w_lab(net.feature_dim(), 0.0);
    double head_b_lab = 0.0;
    for (std::size_t i = 0; i < batch.n(); ++i) {
        const double gi = 2.0 * (fwd_l.predictions[i] - batch.labeled_y[i]);
        head_b_lab += gi;
        for (std::size_t j = 0; j < net.feature_dim(); ++j)
            head_w_lab[j] += gi * fwd_l.features(i, j);
    }

    auto f = [&](const std::vector<double>& phi) {
        UncertaintyLearner u = ul;
        u.unflatten(phi);
        const auto ufwd = forward_uncertainty(u, base_rec.predictions_unlabeled,
                                              batch.pseudo_labels, batch.target_mean,
                                              batch.target_std);
        std::vector<double> head_w_grad = head_w_lab;
        double head_b_grad = head_b_lab;
        for (std::size_t j = 0; j < batch.m(); ++j) {
            const double gj = 2.0 * lambda * std::exp(-ufwd.z[j]) *
                              (base_rec.predictions_unlabeled[j] - batch.pseudo_labels[j]);
            head_b_grad += gj;
            for (std::size_t k = 0; k < net.feature_dim(); ++k)
                head_w_grad[k] += gj * base_rec.features_unlabeled(j, k);
        }
        RegressionNet probe = base_updated;  // extractor update fixed at base phi
        for (std::size_t k = 0; k < net.feature_dim(); ++k)
            probe.head_weights[k] = net.head_weights[k] - base_rec.alpha_head * head_w_grad[k];
        probe.head_bias = net.head_bias - base_rec.alpha_head * head_b_grad;
        return outer_loss(probe, batch.outer_x, batch.outer_y);
    };
    return fd_grad(f, phi0, cfg);
}

CorruptionResult corrupt_pseudo_labels(const TriBatch& batch, const CorruptionSpec& spec,
                                       SeededRng& rng) {
    if (spec.fraction < 0.0 || spec.fraction >= 1.0)
        throw ParamError("corrupt_pseudo_labels: fraction must be in [0,1)");
    CorruptionResult res;
    res.batch = batch;
    res.mask.assign(batch.m(), 0);
    const double scale = spec.magnitude * batch.target_std;
    for (std::size_t j = 0; j < batch.m(); ++j) {
        if (rng.next_double() >= spec.fraction) continue;
        res.mask[j] = 1;
        double& y = res.batch.pseudo_labels[j];
        switch (spec.mode) {
            case CorruptionSpec::Mode::Offset:
                y += (rng.next_double() < 0.5 ? -1.0 : 1.0) * scale;
                break;
            case CorruptionSpec::Mode::SignFlipResidual:
                y = 2.0 * batch.target_mean - y;
                break;
            case CorruptionSpec::Mode::UniformReplace:
                y = rng.next_uniform(batch.target_mean - scale, batch.target_mean + scale);
                break;
        }
    }
    return res;
}

Separation uncertainty_separation(std::span<const double> z,
                                  std::span<const std::uint8_t> corrupted_mask) {
    if (z.size() != corrupted_mask.size())
        throw ShapeError("uncertainty_separation: length mismatch");
    double sum_c = 0.0, sum_k = 0.0;
    std::size_t n_c = 0, n_k = 0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (corrupted_mask[i]) {
            sum_c += z[i];
            ++n_c;
        } else {
            sum_k += z[i];
            ++n_k;
        }
    }
    if (n_c == 0 || n_k == 0)
        throw ParamError("uncertainty_separation: both groups must be nonempty");
    Separation s;
    s.mean_corrupted = sum_c / static_cast<double>(n_c);
    s.mean_clean = sum_k / static_cast<double>(n_k);
    s.gap = s.mean_corrupted - s.mean_clean;
    return s;
}

OracleInstance make_oracle_instance(std::uint64_t seed) {
    SeededRng rng(seed);
    OracleInstance inst;
    // Single wide ReLU layer as the extractor, linear head on top. A wide,
    // small-weight extractor makes the head block the dominant theta-path —
    // the regime the head-only unroll targets — and keeps the one-step update
    // well inside the local Taylor radius at alpha <= 1e-3. Weight magnitudes
    // and inputs are floored away from zero so no ReLU kink is crossed by the
    // probed update (kink crossings would pollute the O(alpha) residual law).
    const std::size_t width = 32;
    const double wscale = 0.15;
    MlpLayer l0;
    l0.weights = Matrix(1, width);
    for (double& w : l0.weights.data()) {
        const double g = rng.next_gauss();
        w = wscale * std::sqrt(2.0) * (g < 0.0 ? -1.0 : 1.0) * (0.5 + 0.5 * std::fabs(g));
    }
    l0.bias.assign(width, 0.0);
    l0.act = Activation::Relu;
    inst.net.extractor.layers = {l0};
    inst.net.head_weights.resize(width);
    for (double& w : inst.net.head_weights)
        w = wscale * std::sqrt(2.0 / static_cast<double>(width)) * rng.next_gauss();
    inst.net.head_bias = 0.0;
    // A learner with nonzero output weights so phi-gradients have full support.
    inst.ul = init_uncertainty_learner(rng, 8, 6.0);
    for (auto& l : inst.ul.mlp.layers)
        for (double& w : l.weights.data()) w = 0.4 * rng.next_gauss();
    for (double& b : inst.ul.mlp.layers.front().bias) b = 0.1 * rng.next_gauss();

    const std::size_t n = 8, m = 4;
    auto draw_x = [&](std::size_t rows) {
        Matrix x(rows, 1);
        for (double& v : x.data()) {
            const double g = rng.next_gauss();
            v = (g < 0.0 ? -1.0 : 1.0) * (0.1 + std::fabs(g));
        }
        return x;
    };
    TriBatch& tb = inst.batch;
    tb.labeled_x = draw_x(n);
    tb.outer_x = draw_x(n);
    tb.unlabeled_weak = draw_x(m);
    tb.unlabeled_strong = tb.unlabeled_weak;
    for (double& v : tb.unlabeled_strong.data()) v += 0.1 * rng.next_gauss();
    tb.labeled_y.resize(n);
    tb.outer_y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        tb.labeled_y[i] = 0.3 * rng.next_gauss();
        tb.outer_y[i] = 0.3 * rng.next_gauss();
    }
    tb.pseudo_labels = forward_regression(inst.net, tb.unlabeled_weak).predictions;
    for (double& y : tb.pseudo_labels) y += 0.15 * rng.next_gauss();
    tb.target_mean = 0.0;
    tb.target_std = 1.0;
    return inst;
}

GradcheckResult run_gradcheck_instance(const OracleInstance& inst, double alpha) {
    const auto& net = inst.net;
    const auto& ul = inst.ul;
    const auto& tb = inst.batch;
    const double lambda = inst.lambda;
    GradcheckResult res;

    // theta-gradient of the inner loss, z held at its base value.
    const InnerEval base = eval_inner(net, ul, tb, lambda);
    const std::vector<double> z_fixed = base.ul_forward.z;
    auto inner_fn = [&](const std::vector<double>& theta) {
        RegressionNet probe = net;
        probe.unflatten(theta);
        const auto fl = forward_regression(probe, tb.labeled_x);
        double loss = supervised_loss(fl.predictions, tb.labeled_y);
        const auto fu = forward_regression(probe, tb.unlabeled_strong);
        return loss + lambda * unsup_nll(fu.predictions, tb.pseudo_labels, z_fixed);
    };
    res.inner_theta_rel_err =
        grad_rel_err(base.grad.flatten(), fd_grad(inner_fn, net.flatten()));

    auto outer_fn = [&](const std::vector<double>& theta) {
        RegressionNet probe = net;
        probe.unflatten(theta);
        return outer_loss(probe, tb.outer_x, tb.outer_y);
    };
    res.outer_theta_rel_err =
        grad_rel_err(grad_outer_theta(net, tb.outer_x, tb.outer_y).flatten(),
                     fd_grad(outer_fn, net.flatten()));

    // phi-gradient of a fixed linear functional of z.
    std::vector<double> z_weights(tb.m());
    for (std::size_t j = 0; j < tb.m(); ++j)
        z_weights[j] = 1.0 + 0.3 * static_cast<double>(j);
    const MlpParams phi_grad = backward_uncertainty(ul, base.ul_forward, z_weights);
    auto ul_fn = [&](const std::vector<double>& phi) {
        UncertaintyLearner probe = ul;
        probe.unflatten(phi);
        const auto fwd = forward_uncertainty(probe, base.predictions_unlabeled,
                                             tb.pseudo_labels, tb.target_mean, tb.target_std);
        return dot(z_weights, fwd.z);
    };
    res.ul_phi_rel_err = grad_rel_err(phi_grad.flatten(), fd_grad(ul_fn, ul.flatten()));

    auto [updated, rec] = inner_step(net, ul, tb, lambda, alpha);
    const Hypergradient hg = hypergradient_phi(rec, updated, ul, tb, lambda);
    const std::vector<double> analytic = hg.phi_grad.flatten();
    res.hypergrad_head_only_rel_err = grad_rel_err(
        analytic, fd_hypergrad_phi(net, ul, tb, lambda, alpha, UnrollMode::HeadOnly));
    const auto full = fd_hypergrad_phi(net, ul, tb, lambda, alpha, UnrollMode::Full);
    res.hypergrad_full_cosine = cosine_similarity(analytic, full);
    res.hypergrad_full_rel_err = grad_rel_err(analytic, full);

    // O(alpha) scaling of the Taylor residual: least-squares slope of
    // log rel_err vs log alpha over one decade.
    const double alphas[3] = {1e-3, 5e-4, 2.5e-4};
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (double a : alphas) {
        const auto t1 = theorem1_equivalence(net, ul, tb, lambda, a);
        const double x = std::log(a);
        const double y = std::log(t1.rel_err);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    res.theorem1_slope = (3.0 * sxy - sx * sy) / (3.0 * sxx - sx * sx);
    return res;
}

}  // namespace bssr
