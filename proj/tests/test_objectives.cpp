#include <cmath>

#include <doctest.h>

#include "bssr/diagnostics.hpp"
#include "bssr/errors.hpp"
#include "bssr/objectives.hpp"

using namespace bssr;

TEST_CASE("supervised_loss hand cases") {
    const std::vector<double> p{1.0, 2.0}, t{0.0, 0.0};
    CHECK(supervised_loss(p, p) == 0.0);
    CHECK(supervised_loss(p, t) == 5.0);
    const std::vector<double> p2{2.0, 4.0};
    CHECK(supervised_loss(p2, t) == 4.0 * supervised_loss(p, t));
    CHECK_THROWS_AS(supervised_loss({}, {}), ParamError);
}

TEST_CASE("unsup_nll hand cases") {
    const double ln4 = std::log(4.0);
    // yhat == r: only the z regularizer remains
    CHECK(unsup_nll(std::vector<double>{3.0}, std::vector<double>{3.0},
                    std::vector<double>{ln4}) == doctest::Approx(ln4).epsilon(1e-15));
    // residual 2 at z = ln 4: 4/4 + ln 4
    CHECK(unsup_nll(std::vector<double>{0.0}, std::vector<double>{2.0},
                    std::vector<double>{ln4}) ==
          doctest::Approx(1.0 + ln4).epsilon(1e-15));
    CHECK_THROWS_AS(unsup_nll(std::vector<double>{0.0}, std::vector<double>{1.0},
                              std::vector<double>{std::nan("")}),
                    NumericError);
}

TEST_CASE("unsup_nll with z == 0 equals supervised_loss bit-exactly") {
    SeededRng rng(21);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> r(7), y(7);
        for (auto& v : r) v = rng.next_uniform(-10.0, 10.0);
        for (auto& v : y) v = rng.next_uniform(-10.0, 10.0);
        const std::vector<double> z(7, 0.0);
        CHECK(unsup_nll(r, y, z) == supervised_loss(r, y));
    }
}

TEST_CASE("unsup_nll minimizer over z is ln(d^2) with value 1 + ln(d^2)") {
    const double d = 1.7;
    const std::vector<double> r{0.0}, y{d};
    double best_z = 0.0, best = 1e300;
    for (double z = -6.0; z <= 6.0; z += 1e-4) {
        const double v = unsup_nll(r, y, std::vector<double>{z});
        if (v < best) {
            best = v;
            best_z = z;
        }
    }
    CHECK(best_z == doctest::Approx(std::log(d * d)).epsilon(1e-3));
    CHECK(best == doctest::Approx(1.0 + std::log(d * d)).epsilon(1e-6));
}

TEST_CASE("inner_loss composition") {
    auto inst = make_oracle_instance(31);
    SUBCASE("lambda 0 leaves only the supervised term") {
        const auto b = inner_loss(inst.net, inst.ul, inst.batch, 0.0);
        CHECK(b.total == b.l_sup);
    }
    SUBCASE("m = 0 leaves only the supervised term") {
        TriBatch tb = inst.batch;
        tb.unlabeled_weak = Matrix(0, 1);
        tb.unlabeled_strong = Matrix(0, 1);
        tb.pseudo_labels.clear();
        const auto b = inner_loss(inst.net, inst.ul, tb, 3.0);
        CHECK(b.total == b.l_sup);
        CHECK(b.l_unsup_fit == 0.0);
        CHECK(b.l_unsup_reg == 0.0);
    }
    SUBCASE("lambda 1 equals the hand-composed sum") {
        const auto b = inner_loss(inst.net, inst.ul, inst.batch, 1.0);
        const auto fl = forward_regression(inst.net, inst.batch.labeled_x);
        const auto fu = forward_regression(inst.net, inst.batch.unlabeled_strong);
        const auto uf = forward_uncertainty(inst.ul, fu.predictions, inst.batch.pseudo_labels,
                                            inst.batch.target_mean, inst.batch.target_std);
        const double expect = supervised_loss(fl.predictions, inst.batch.labeled_y) +
                              unsup_nll(fu.predictions, inst.batch.pseudo_labels, uf.z);
        CHECK(b.total == doctest::Approx(expect).epsilon(1e-15));
        CHECK(b.total == b.l_sup + b.lambda * (b.l_unsup_fit + b.l_unsup_reg));
    }
}

TEST_CASE("outer_loss") {
    auto inst = make_oracle_instance(32);
    const auto fwd = forward_regression(inst.net, inst.batch.outer_x);
    CHECK(outer_loss(inst.net, inst.batch.outer_x, fwd.predictions) == 0.0);
    const Matrix x = Matrix::from_rows({{0.0}, {1.0}, {2.0}});
    RegressionNet net = inst.net;
    for (auto& l : net.extractor.layers)
        for (double& w : l.weights.data()) w = 0.0;
    for (double& w : net.head_weights) w = 0.0;
    net.head_bias = 1.0;
    // residuals 1, -1, 2 -> 1 + 1 + 4
    CHECK(outer_loss(net, x, std::vector<double>{0.0, 2.0, -1.0}) == 6.0);
    CHECK_THROWS_AS(outer_loss(net, Matrix(0, 1), std::vector<double>{}), ParamError);
}

TEST_CASE("grad_inner_theta: lambda 0 reduces to the supervised gradient") {
    auto inst = make_oracle_instance(33);
    TriBatch sup_only = inst.batch;
    sup_only.unlabeled_weak = Matrix(0, 1);
    sup_only.unlabeled_strong = Matrix(0, 1);
    sup_only.pseudo_labels.clear();
    const auto g0 = grad_inner_theta(inst.net, inst.ul, inst.batch, 0.0);
    const auto gs = grad_inner_theta(inst.net, inst.ul, sup_only, 0.0);
    CHECK(g0.flatten() == gs.flatten());
}

TEST_CASE("grad_inner_theta head-bias formula") {
    auto inst = make_oracle_instance(34);
    const double lambda = 0.8;
    const auto g = grad_inner_theta(inst.net, inst.ul, inst.batch, lambda);
    const auto fl = forward_regression(inst.net, inst.batch.labeled_x);
    const auto fu = forward_regression(inst.net, inst.batch.unlabeled_strong);
    const auto uf = forward_uncertainty(inst.ul, fu.predictions, inst.batch.pseudo_labels,
                                        inst.batch.target_mean, inst.batch.target_std);
    double expect = 0.0;
    for (std::size_t i = 0; i < inst.batch.n(); ++i)
        expect += 2.0 * (fl.predictions[i] - inst.batch.labeled_y[i]);
    for (std::size_t j = 0; j < inst.batch.m(); ++j)
        expect += 2.0 * lambda * std::exp(-uf.z[j]) *
                  (fu.predictions[j] - inst.batch.pseudo_labels[j]);
    CHECK(g.head_bias == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("theta-gradients match finite differences on 20 random instances") {
    for (std::uint64_t seed = 100; seed < 120; ++seed) {
        const auto inst = make_oracle_instance(seed);
        const auto r = run_gradcheck_instance(inst);
        CAPTURE(seed);
        CHECK(r.inner_theta_rel_err <= 1e-6);
        CHECK(r.outer_theta_rel_err <= 1e-6);
        CHECK(r.ul_phi_rel_err <= 1e-6);
    }
}

TEST_CASE("inner loss is decreasing in z iff the squared residual exceeds e^z") {
    const std::vector<double> r{0.0}, y{2.0};  // d^2 = 4
    const double z_lo = std::log(4.0) - 0.5, z_hi = std::log(4.0) + 0.5;
    const double eps = 1e-7;
    auto at = [&](double z) { return unsup_nll(r, y, std::vector<double>{z}); };
    CHECK(at(z_lo + eps) < at(z_lo));  // d^2 > e^z: decreasing
    CHECK(at(z_hi + eps) > at(z_hi));  // d^2 < e^z: increasing
}
