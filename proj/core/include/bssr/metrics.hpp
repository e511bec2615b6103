#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

namespace bssr {

struct MetricsRecord {
    double mae = 0.0;
    double mse = 0.0;
    double r2 = 0.0;
    std::size_t n = 0;
};

// Evaluation metrics are means (1/n form), unlike the training losses which
// are batch sums.
double mae(std::span<const double> pred, std::span<const double> truth);
double mse(std::span<const double> pred, std::span<const double> truth);
double r2(std::span<const double> pred, std::span<const double> truth);

MetricsRecord compute_metrics(std::span<const double> pred, std::span<const double> truth);

// Population std of values per group; groups with fewer than two members are
// omitted.
std::map<long long, double> subgroup_std(std::span<const double> values,
                                         std::span<const long long> group_keys);
long long bin_key(double value, double bin_width);

// Spearman rank correlation, average ranks for ties.
double sigma_error_spearman(std::span<const double> sigma_sq, std::span<const double> abs_err);

}  // namespace bssr
