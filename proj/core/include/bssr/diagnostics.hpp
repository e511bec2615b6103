#pragma once

#include <functional>

#include "bssr/bilevel.hpp"

namespace bssr {

struct FdConfig {
    double step = 1e-6;
    double rel_err_tol = 1e-6;
};

// Central finite differences over a flat parameter vector.
std::vector<double> fd_grad(const std::function<double(const std::vector<double>&)>& f,
                            std::vector<double> x, const FdConfig& cfg = {});

// ||a-b||_inf / max(1, ||a||_inf, ||b||_inf)
double grad_rel_err(std::span<const double> a, std::span<const double> b);
double cosine_similarity(std::span<const double> a, std::span<const double> b);

enum class UnrollMode { HeadOnly, Full };

// Finite-difference hypergradient: phi -> outer_loss(inner_step(theta, phi)).
// HeadOnly freezes the extractor update at the base phi's value (the exact
// comparison target for the closed-form hypergradient); Full re-runs the
// whole inner step under the perturbed phi (approximation-gap measurement).
std::vector<double> fd_hypergrad_phi(const RegressionNet& net, const UncertaintyLearner& ul,
                                     const TriBatch& batch, double lambda, double alpha,
                                     UnrollMode mode, const FdConfig& cfg = {});

struct CorruptionSpec {
    double fraction = 0.0;    // p in [0,1)
    double magnitude = 0.0;   // x labeled target std
    enum class Mode { Offset, SignFlipResidual, UniformReplace } mode = Mode::Offset;
};

struct CorruptionResult {
    TriBatch batch;
    std::vector<std::uint8_t> mask;  // 1 where the pseudo-label was tampered
};

CorruptionResult corrupt_pseudo_labels(const TriBatch& batch, const CorruptionSpec& spec,
                                       SeededRng& rng);

struct Separation {
    double mean_corrupted = 0.0;
    double mean_clean = 0.0;
    double gap = 0.0;  // mean_corrupted - mean_clean
};

Separation uncertainty_separation(std::span<const double> z,
                                  std::span<const std::uint8_t> corrupted_mask);

// ---- gradient-check harness --------------------------------------------

// A small random problem (1 -> 8 -> 4 net, 8-unit learner, n = m = 4) used to
// exercise every analytic gradient against its finite-difference oracle.
struct OracleInstance {
    RegressionNet net;
    UncertaintyLearner ul;
    TriBatch batch;
    double lambda = 0.7;
};

OracleInstance make_oracle_instance(std::uint64_t seed);

struct GradcheckResult {
    double inner_theta_rel_err = 0.0;
    double outer_theta_rel_err = 0.0;
    double ul_phi_rel_err = 0.0;
    double hypergrad_head_only_rel_err = 0.0;
    double hypergrad_full_cosine = 0.0;
    double hypergrad_full_rel_err = 0.0;
    double theorem1_slope = 0.0;
};

GradcheckResult run_gradcheck_instance(const OracleInstance& inst, double alpha = 1e-3);

}  // namespace bssr
