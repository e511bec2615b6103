#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bssr/matrix.hpp"
#include "bssr/models.hpp"
#include "bssr/rng.hpp"

namespace bssr {

// Rows may be labeled (target present) or unlabeled. Target statistics are
// computed over labeled rows only.
struct Dataset {
    Matrix features;                      // N x d
    std::vector<double> targets;          // N; NaN for unlabeled rows
    std::vector<std::uint8_t> labeled;    // N
    double target_mean = 0.0;
    double target_std = 1.0;

    std::size_t size() const { return features.rows(); }
    std::size_t dim() const { return features.cols(); }
    std::size_t labeled_count() const;
    // Recompute target_mean/target_std (population std) over labeled rows.
    void refresh_target_stats();
};

Dataset load_csv(const std::string& path);
void write_csv(const Dataset& ds, const std::string& path);

// Built-in synthetic regression tasks with input-dependent noise.
//   sine-hetero: x ~ U[-3,3],   y = sin(2x) + 0.5x + N(0,(0.05+0.2|x|)^2)
//   poly-hetero: x ~ U[-2,2]^3, y = x1^2 - x2*x3  + N(0,(0.1+0.3*x1^2)^2)
Dataset synth_generate(SeededRng& rng, std::size_t n_samples, const std::string& task,
                       double noise_scale = 1.0);

struct SplitConfig {
    double label_ratio = 0.1;  // gamma in (0,1]
    double test_fraction = 0.2;
    double val_fraction = 0.2;
    std::uint64_t seed = 0;
};

struct LabeledPool {
    Matrix features;
    std::vector<double> targets;
    std::vector<std::size_t> source_rows;  // indices into the original dataset
};

struct UnlabeledPool {
    Matrix features;
    // Ground truth for diagnostics only; never flows into a TriBatch.
    std::vector<double> shadow_targets;
    std::vector<std::size_t> source_rows;
};

struct Splits {
    LabeledPool train_labeled;
    UnlabeledPool train_unlabeled;
    LabeledPool val;
    LabeledPool test;
    double target_mean = 0.0;           // labeled-train statistics, frozen
    double target_std = 1.0;
    std::vector<double> feature_std;    // per-feature std over training rows
};

Splits split(const Dataset& ds, const SplitConfig& cfg);

struct AugmentConfig {
    double weak_noise_std = 0.05;   // x per-feature std
    double strong_noise_std = 0.2;  // x per-feature std
    double strong_mask_prob = 0.1;
};

// One training step's data. Ground-truth targets of the unlabeled rows are
// deliberately absent.
struct TriBatch {
    Matrix labeled_x;                // B_l
    std::vector<double> labeled_y;
    Matrix outer_x;                  // B-hat_l, index-disjoint from B_l
    std::vector<double> outer_y;
    Matrix unlabeled_weak;           // same m rows, two views
    Matrix unlabeled_strong;
    std::vector<double> pseudo_labels;  // f(weak view), held constant
    double target_mean = 0.0;
    double target_std = 1.0;
    std::vector<std::size_t> labeled_idx;
    std::vector<std::size_t> outer_idx;
    std::vector<std::size_t> unlabeled_idx;

    std::size_t n() const { return labeled_y.size(); }
    std::size_t m() const { return pseudo_labels.size(); }
};

TriBatch get_tri_batch(SeededRng& rng, const Splits& splits, std::size_t n, std::size_t m,
                       const AugmentConfig& aug, const RegressionNet& net);

}  // namespace bssr
