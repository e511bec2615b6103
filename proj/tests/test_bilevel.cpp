#include <cmath>

#include <doctest.h>

#include "bssr/bilevel.hpp"
#include "bssr/diagnostics.hpp"
#include "bssr/errors.hpp"

using namespace bssr;

TEST_CASE("inner_step lowers the inner loss for a small alpha") {
    const auto inst = make_oracle_instance(40);
    const auto before = inner_loss(inst.net, inst.ul, inst.batch, inst.lambda).total;
    const auto [net2, rec] = inner_step(inst.net, inst.ul, inst.batch, inst.lambda, 1e-4);
    const auto after = inner_loss(net2, inst.ul, inst.batch, inst.lambda).total;
    CHECK(after < before);
    CHECK(rec.loss.total == doctest::Approx(before).epsilon(1e-15));
}

TEST_CASE("inner_step is explicit gradient descent") {
    const auto inst = make_oracle_instance(41);
    const double alpha = 3e-3;
    const auto g = grad_inner_theta(inst.net, inst.ul, inst.batch, inst.lambda);
    const auto [net2, rec] = inner_step(inst.net, inst.ul, inst.batch, inst.lambda, alpha);
    const auto flat_before = inst.net.flatten();
    const auto flat_after = net2.flatten();
    const auto gflat = g.flatten();
    for (std::size_t i = 0; i < flat_before.size(); ++i)
        CHECK(flat_after[i] == doctest::Approx(flat_before[i] - alpha * gflat[i]).epsilon(1e-12));
    CHECK(rec.theta_before == flat_before);
    CHECK(rec.theta_after == flat_after);
}

TEST_CASE("inner_step separate head step size") {
    const auto inst = make_oracle_instance(42);
    const double alpha = 1e-3, alpha_head = 5e-4;
    const auto g = grad_inner_theta(inst.net, inst.ul, inst.batch, inst.lambda);
    const auto [net2, rec] =
        inner_step(inst.net, inst.ul, inst.batch, inst.lambda, alpha, alpha_head);
    CHECK(rec.alpha_head == alpha_head);
    CHECK(net2.head_bias ==
          doctest::Approx(inst.net.head_bias - alpha_head * g.head_bias).epsilon(1e-12));
    for (std::size_t k = 0; k < net2.head_weights.size(); ++k)
        CHECK(net2.head_weights[k] ==
              doctest::Approx(inst.net.head_weights[k] - alpha_head * g.head_weights[k])
                  .epsilon(1e-12));
    // extractor still moves at alpha
    const double w_before = inst.net.extractor.layers[0].weights(0, 0);
    const double w_after = net2.extractor.layers[0].weights(0, 0);
    const double gw = g.extractor.layers[0].weights(0, 0);
    CHECK(w_after == doctest::Approx(w_before - alpha * gw).epsilon(1e-12));
}

TEST_CASE("inner_step records pre-update strong-view quantities") {
    const auto inst = make_oracle_instance(43);
    const auto fu = forward_regression(inst.net, inst.batch.unlabeled_strong);
    const auto [net2, rec] = inner_step(inst.net, inst.ul, inst.batch, inst.lambda, 1e-3);
    CHECK(rec.predictions_unlabeled == fu.predictions);
    CHECK(rec.features_unlabeled == fu.features);
    CHECK(rec.pseudo_labels == inst.batch.pseudo_labels);
    CHECK(rec.lambda == inst.lambda);
}

TEST_CASE("hypergradient_phi closed form matches the head-only fd oracle") {
    for (std::uint64_t seed = 200; seed < 210; ++seed) {
        const auto inst = make_oracle_instance(seed);
        const auto r = run_gradcheck_instance(inst);
        CAPTURE(seed);
        CHECK(r.hypergrad_head_only_rel_err <= 1e-6);
    }
}

TEST_CASE("hypergradient_phi approximates the full unroll") {
    for (std::uint64_t seed = 210; seed < 216; ++seed) {
        const auto inst = make_oracle_instance(seed);
        const auto r = run_gradcheck_instance(inst);
        CAPTURE(seed);
        CHECK(r.hypergrad_full_cosine >= 0.99);
    }
}

TEST_CASE("hypergradient_phi is zero when lambda is zero or m is zero") {
    const auto inst = make_oracle_instance(44);
    SUBCASE("lambda 0") {
        const auto [net2, rec] = inner_step(inst.net, inst.ul, inst.batch, 0.0, 1e-3);
        const auto hg = hypergradient_phi(rec, net2, inst.ul, inst.batch, 0.0);
        CHECK(max_abs(hg.phi_grad.flatten()) == 0.0);
    }
    SUBCASE("m = 0") {
        TriBatch tb = inst.batch;
        tb.unlabeled_weak = Matrix(0, 1);
        tb.unlabeled_strong = Matrix(0, 1);
        tb.pseudo_labels.clear();
        const auto [net2, rec] = inner_step(inst.net, inst.ul, tb, inst.lambda, 1e-3);
        const auto hg = hypergradient_phi(rec, net2, inst.ul, tb, inst.lambda);
        CHECK(max_abs(hg.phi_grad.flatten()) == 0.0);
        CHECK(hg.per_sample_scalar.empty());
    }
}

TEST_CASE("hypergradient_phi contract checks") {
    const auto a = make_oracle_instance(45);
    const auto b = make_oracle_instance(46);
    const auto [net2, rec] = inner_step(a.net, a.ul, a.batch, a.lambda, 1e-3);
    CHECK_THROWS_AS(hypergradient_phi(rec, net2, a.ul, b.batch, a.lambda), ContractError);
}

TEST_CASE("outer_step is plain descent on phi") {
    const auto inst = make_oracle_instance(47);
    const auto [net2, rec] = inner_step(inst.net, inst.ul, inst.batch, inst.lambda, 1e-3);
    const auto hg = hypergradient_phi(rec, net2, inst.ul, inst.batch, inst.lambda);
    const double beta = 0.01;
    const auto ul2 = outer_step(inst.ul, hg, beta);
    const auto before = inst.ul.mlp.flatten();
    const auto after = ul2.mlp.flatten();
    const auto gflat = hg.phi_grad.flatten();
    for (std::size_t i = 0; i < before.size(); ++i)
        CHECK(after[i] == doctest::Approx(before[i] - beta * gflat[i]).epsilon(1e-12));
    CHECK(ul2.z_max == inst.ul.z_max);
}

TEST_CASE("alignment_score sign") {
    const auto inst = make_oracle_instance(48);
    const auto gi = grad_inner_theta(inst.net, inst.ul, inst.batch, inst.lambda).flatten();
    TriBatch outer_as_sup = inst.batch;
    outer_as_sup.labeled_x = inst.batch.outer_x;
    outer_as_sup.labeled_y = inst.batch.outer_y;
    outer_as_sup.unlabeled_weak = Matrix(0, 1);
    outer_as_sup.unlabeled_strong = Matrix(0, 1);
    outer_as_sup.pseudo_labels.clear();
    const auto go = grad_inner_theta(inst.net, inst.ul, outer_as_sup, 0.0).flatten();
    CHECK(alignment_score(inst.net, inst.ul, inst.batch, inst.lambda) ==
          doctest::Approx(-dot(gi, go)).epsilon(1e-12));
}

TEST_CASE("theorem 1: outer descent equals alignment ascent to first order") {
    const auto inst = make_oracle_instance(49);
    double prev_rel = -1.0;
    std::vector<double> log_alpha, log_err;
    for (const double alpha : {1e-2, 5e-3, 2.5e-3, 1.25e-3}) {
        const auto res = theorem1_equivalence(inst.net, inst.ul, inst.batch, inst.lambda, alpha);
        CHECK(res.rel_err < 1.0);
        if (prev_rel >= 0.0) CHECK(res.rel_err < prev_rel);  // shrinks with alpha
        prev_rel = res.rel_err;
        log_alpha.push_back(std::log(alpha));
        log_err.push_back(std::log(res.rel_err));
    }
    // least-squares slope of log rel_err vs log alpha: expect ~1 (O(alpha))
    const std::size_t k = log_alpha.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < k; ++i) { mx += log_alpha[i]; my += log_err[i]; }
    mx /= static_cast<double>(k);
    my /= static_cast<double>(k);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        num += (log_alpha[i] - mx) * (log_err[i] - my);
        den += (log_alpha[i] - mx) * (log_alpha[i] - mx);
    }
    const double slope = num / den;
    CHECK(slope >= 0.8);
    CHECK(slope <= 1.2);
}
