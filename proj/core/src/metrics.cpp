#include "bssr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bssr/errors.hpp"

namespace bssr {

static void check_pair(std::span<const double> pred, std::span<const double> truth,
                       const char* op) {
    if (pred.size() != truth.size())
        throw ShapeError(std::string(op) + ": length mismatch");
    if (pred.empty())
        throw ParamError(std::string(op) + ": empty input");
}

double mae(std::span<const double> pred, std::span<const double> truth) {
    check_pair(pred, truth, "mae");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::fabs(pred[i] - truth[i]);
    return s / static_cast<double>(pred.size());
}

double mse(std::span<const double> pred, std::span<const double> truth) {
    check_pair(pred, truth, "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - truth[i];
        s += d * d;
    }
    return s / static_cast<double>(pred.size());
}

double r2(std::span<const double> pred, std::span<const double> truth) {
    check_pair(pred, truth, "r2");
    double mean = 0.0;
    for (double y : truth) mean += y;
    mean /= static_cast<double>(truth.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double dr = pred[i] - truth[i];
        const double dt = truth[i] - mean;
        ss_res += dr * dr;
        ss_tot += dt * dt;
    }
    if (ss_tot == 0.0)
        throw ParamError("r2: undefined for constant truth");
    return 1.0 - ss_res / ss_tot;
}

MetricsRecord compute_metrics(std::span<const double> pred, std::span<const double> truth) {
    return {mae(pred, truth), mse(pred, truth), r2(pred, truth), pred.size()};
}

long long bin_key(double value, double bin_width) {
    if (bin_width <= 0.0) throw ParamError("bin_key: bin_width must be > 0");
    return static_cast<long long>(std::floor(value / bin_width));
}

std::map<long long, double> subgroup_std(std::span<const double> values,
                                         std::span<const long long> group_keys) {
    if (values.size() != group_keys.size())
        throw ShapeError("subgroup_std: length mismatch");
    std::map<long long, std::vector<double>> groups;
    for (std::size_t i = 0; i < values.size(); ++i)
        groups[group_keys[i]].push_back(values[i]);

    std::map<long long, double> out;
    for (const auto& [key, vs] : groups) {
        if (vs.size() < 2) continue;  // singleton groups omitted
        double mean = 0.0;
        for (double v : vs) mean += v;
        mean /= static_cast<double>(vs.size());
        double sq = 0.0;
        for (double v : vs) sq += (v - mean) * (v - mean);
        out[key] = std::sqrt(sq / static_cast<double>(vs.size()));
    }
    return out;
}

// Ranks 1..n, ties get the average of their rank range.
static std::vector<double> average_ranks(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

double sigma_error_spearman(std::span<const double> sigma_sq, std::span<const double> abs_err) {
    if (sigma_sq.size() != abs_err.size())
        throw ShapeError("sigma_error_spearman: length mismatch");
    if (sigma_sq.size() < 3)
        throw ParamError("sigma_error_spearman: need at least 3 samples");
    const bool const_a = std::equal(sigma_sq.begin() + 1, sigma_sq.end(), sigma_sq.begin());
    const bool const_b = std::equal(abs_err.begin() + 1, abs_err.end(), abs_err.begin());
    if (const_a || const_b)
        throw ParamError("sigma_error_spearman: undefined for constant input");

    const auto ra = average_ranks(sigma_sq);
    const auto rb = average_ranks(abs_err);
    const double n = static_cast<double>(sigma_sq.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    return cov / std::sqrt(va * vb);
}

}  // namespace bssr
