#pragma once

#include <string>

#include "bssr/bilevel.hpp"
#include "bssr/diagnostics.hpp"
#include "bssr/metrics.hpp"

namespace bssr {

enum class Method { Supervised, FullySupervised, FixedSigma, JointUl, Bilevel };

Method method_from_string(const std::string& s);
std::string method_to_string(Method m);

struct RunConfig {
    Method method = Method::Bilevel;
    double gamma = 0.1;        // label ratio
    double lambda = 1.0;
    double alpha = 1e-2;       // extractor learning rate
    double alpha_head = -1.0;  // head learning rate; <0 means "same as alpha"
    double beta = 1e-3;        // uncertainty-learner learning rate
    std::size_t iterations = 2000;
    std::size_t batch_labeled = 32;    // n
    std::size_t batch_unlabeled = 32;  // m
    std::vector<std::size_t> hidden_dims{32, 32};
    std::size_t feature_dim = 16;
    std::size_t ul_hidden = 16;
    double z_max = 6.0;
    AugmentConfig aug;
    std::uint64_t seed = 0;
    std::size_t eval_every = 100;
    bool lambda_warmup = false;     // linear ramp over the first 10% of iterations
    bool normalize_losses = false;  // rescale sums to batch means for the updates
    CorruptionSpec corruption;      // fraction 0 = off
};

std::uint64_t config_hash(const RunConfig& cfg);

struct EvalRecord {
    std::size_t iteration = 0;
    double l_sup = 0.0;
    double l_unsup_fit = 0.0;
    double l_unsup_reg = 0.0;
    double val_mae = 0.0;
    double val_mse = 0.0;
    double val_r2 = 0.0;
    double alignment = 0.0;
    double mean_z = 0.0;
    double spearman = 0.0;
};

struct RunLog {
    std::vector<EvalRecord> records;
    MetricsRecord test;
    // Final-state diagnostics over a held-aside unlabeled probe batch.
    double final_spearman = 0.0;
    double final_gap = 0.0;
    double final_mean_z = 0.0;
    bool diverged = false;
    double wall_ms = 0.0;
};

struct TrainResult {
    RegressionNet net;
    UncertaintyLearner ul;
    RunLog log;
};

TrainResult train(const RunConfig& cfg, const Splits& splits);

MetricsRecord evaluate(const RegressionNet& net, const Matrix& x,
                       std::span<const double> y);

void checkpoint_save(const RegressionNet& net, const UncertaintyLearner& ul,
                     std::uint64_t cfg_hash, const std::string& path);

struct Checkpoint {
    RegressionNet net;
    UncertaintyLearner ul;
    std::uint64_t config_hash = 0;
};

Checkpoint checkpoint_load(const std::string& path);

void write_runlog_csv(const RunLog& log, const std::string& path);

}  // namespace bssr
