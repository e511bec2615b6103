#include "bssr/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "bssr/errors.hpp"

namespace bssr {

std::size_t Dataset::labeled_count() const {
    std::size_t c = 0;
    for (auto f : labeled) c += f;
    return c;
}

void Dataset::refresh_target_stats() {
    double sum = 0.0, sq = 0.0;
    std::size_t c = 0;
    for (std::size_t i = 0; i < size(); ++i) {
        if (!labeled[i]) continue;
        sum += targets[i];
        ++c;
    }
    if (c == 0) {
        target_mean = 0.0;
        target_std = 1.0;
        return;
    }
    target_mean = sum / static_cast<double>(c);
    for (std::size_t i = 0; i < size(); ++i) {
        if (!labeled[i]) continue;
        const double d = targets[i] - target_mean;
        sq += d * d;
    }
    target_std = std::sqrt(sq / static_cast<double>(c));
    if (target_std == 0.0) target_std = 1.0;
}

static std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

static double parse_cell(const std::string& cell, std::size_t row, const std::string& col) {
    double v = 0.0;
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc{} || ptr != end)
        throw IoError("parse error at row " + std::to_string(row) + ", col " + col +
                      ": '" + cell + "'");
    return v;
}

Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const auto header = split_line(line);
    std::size_t target_col = header.size();
    std::vector<std::string> feature_names;
    std::vector<std::size_t> feature_cols;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (header[j] == "target") {
            target_col = j;
        } else {
            feature_names.push_back(header[j]);
            feature_cols.push_back(j);
        }
    }
    if (target_col == header.size())
        throw IoError(path + ": schema error, no 'target' column");

    std::vector<std::vector<double>> rows;
    std::vector<double> targets;
    std::vector<std::uint8_t> labeled;
    std::size_t row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_line(line);
        if (cells.size() != header.size())
            throw IoError(path + ": row " + std::to_string(row_no) + " has " +
                          std::to_string(cells.size()) + " cells, header has " +
                          std::to_string(header.size()));
        std::vector<double> feats(feature_cols.size());
        for (std::size_t k = 0; k < feature_cols.size(); ++k)
            feats[k] = parse_cell(cells[feature_cols[k]], row_no, feature_names[k]);
        rows.push_back(std::move(feats));
        if (cells[target_col].empty()) {
            targets.push_back(std::numeric_limits<double>::quiet_NaN());
            labeled.push_back(0);
        } else {
            targets.push_back(parse_cell(cells[target_col], row_no, "target"));
            labeled.push_back(1);
        }
    }

    Dataset ds;
    ds.features = Matrix(rows.size(), feature_cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < feature_cols.size(); ++j)
            ds.features(i, j) = rows[i][j];
    ds.targets = std::move(targets);
    ds.labeled = std::move(labeled);
    ds.features.require_finite("load_csv");
    ds.refresh_target_stats();
    return ds;
}

static std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    for (std::size_t j = 0; j < ds.dim(); ++j) out << "x" << j + 1 << ",";
    out << "target\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t j = 0; j < ds.dim(); ++j) out << fmt_double(ds.features(i, j)) << ",";
        if (ds.labeled[i]) out << fmt_double(ds.targets[i]);
        out << "\n";
    }
}

Dataset synth_generate(SeededRng& rng, std::size_t n_samples, const std::string& task,
                       double noise_scale) {
    if (n_samples < 10) throw ParamError("synth_generate: need n_samples >= 10");
    Dataset ds;
    if (task == "sine-hetero") {
        ds.features = Matrix(n_samples, 1);
        ds.targets.resize(n_samples);
        for (std::size_t i = 0; i < n_samples; ++i) {
            const double x = rng.next_uniform(-3.0, 3.0);
            const double sigma = noise_scale * (0.05 + 0.2 * std::fabs(x));
            ds.features(i, 0) = x;
            ds.targets[i] = std::sin(2.0 * x) + 0.5 * x + sigma * rng.next_gauss();
        }
    } else if (task == "poly-hetero") {
        ds.features = Matrix(n_samples, 3);
        ds.targets.resize(n_samples);
        for (std::size_t i = 0; i < n_samples; ++i) {
            double x[3];
            for (double& v : x) v = rng.next_uniform(-2.0, 2.0);
            const double sigma = noise_scale * (0.1 + 0.3 * x[0] * x[0]);
            for (std::size_t j = 0; j < 3; ++j) ds.features(i, j) = x[j];
            ds.targets[i] = x[0] * x[0] - x[1] * x[2] + sigma * rng.next_gauss();
        }
    } else {
        throw ParamError("synth_generate: unknown task '" + task + "'");
    }
    ds.labeled.assign(n_samples, 1);
    ds.refresh_target_stats();
    return ds;
}

// Partial Fisher-Yates: deterministically pick k distinct entries.
static std::vector<std::size_t> sample_without_replacement(SeededRng& rng,
                                                           std::vector<std::size_t>& pool,
                                                           std::size_t k) {
    std::vector<std::size_t> out(k);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + rng.next_index(pool.size() - i);
        std::swap(pool[i], pool[j]);
        out[i] = pool[i];
    }
    return out;
}

Splits split(const Dataset& ds, const SplitConfig& cfg) {
    if (cfg.label_ratio <= 0.0 || cfg.label_ratio > 1.0)
        throw ConfigError("split: label_ratio must be in (0,1]");
    if (cfg.test_fraction < 0.0 || cfg.val_fraction < 0.0 ||
        cfg.test_fraction + cfg.val_fraction >= 1.0)
        throw ConfigError("split: test/val fractions must be nonnegative and sum < 1");

    std::vector<std::size_t> labeled_rows, unlabeled_rows;
    for (std::size_t i = 0; i < ds.size(); ++i)
        (ds.labeled[i] ? labeled_rows : unlabeled_rows).push_back(i);

    SeededRng rng(cfg.seed);
    const auto n_test = static_cast<std::size_t>(
        std::llround(cfg.test_fraction * static_cast<double>(ds.size())));
    const auto n_val = static_cast<std::size_t>(
        std::llround(cfg.val_fraction * static_cast<double>(ds.size())));
    if (labeled_rows.size() < n_test + n_val)
        throw ConfigError("split: not enough labeled rows for test+val");

    std::vector<std::size_t> pool = labeled_rows;
    const auto test_idx = sample_without_replacement(rng, pool, n_test);
    std::vector<std::size_t> rest(pool.begin() + n_test, pool.end());
    const auto val_idx = sample_without_replacement(rng, rest, n_val);
    std::vector<std::size_t> train_lab_pool(rest.begin() + n_val, rest.end());

    const std::size_t n_train = train_lab_pool.size() + unlabeled_rows.size();
    const auto n_keep = static_cast<std::size_t>(
        std::floor(cfg.label_ratio * static_cast<double>(n_train)));
    if (n_keep == 0 || n_keep > train_lab_pool.size())
        throw ConfigError("split: label_ratio " + std::to_string(cfg.label_ratio) +
                          " yields " + std::to_string(n_keep) + " labeled rows out of " +
                          std::to_string(train_lab_pool.size()) + " available");
    const auto keep_idx = sample_without_replacement(rng, train_lab_pool, n_keep);
    std::vector<std::size_t> demoted(train_lab_pool.begin() + n_keep, train_lab_pool.end());

    auto make_labeled = [&](const std::vector<std::size_t>& idx) {
        LabeledPool p;
        p.features = Matrix(idx.size(), ds.dim());
        p.targets.resize(idx.size());
        p.source_rows = idx;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            for (std::size_t j = 0; j < ds.dim(); ++j) p.features(i, j) = ds.features(idx[i], j);
            p.targets[i] = ds.targets[idx[i]];
        }
        return p;
    };

    Splits s;
    s.test = make_labeled(test_idx);
    s.val = make_labeled(val_idx);
    s.train_labeled = make_labeled(keep_idx);

    std::vector<std::size_t> unl = demoted;
    unl.insert(unl.end(), unlabeled_rows.begin(), unlabeled_rows.end());
    s.train_unlabeled.features = Matrix(unl.size(), ds.dim());
    s.train_unlabeled.shadow_targets.resize(unl.size());
    s.train_unlabeled.source_rows = unl;
    for (std::size_t i = 0; i < unl.size(); ++i) {
        for (std::size_t j = 0; j < ds.dim(); ++j)
            s.train_unlabeled.features(i, j) = ds.features(unl[i], j);
        s.train_unlabeled.shadow_targets[i] = ds.targets[unl[i]];
    }

    {
        double sum = 0.0;
        for (double y : s.train_labeled.targets) sum += y;
        s.target_mean = sum / static_cast<double>(s.train_labeled.targets.size());
        double sq = 0.0;
        for (double y : s.train_labeled.targets) {
            const double d = y - s.target_mean;
            sq += d * d;
        }
        s.target_std = std::sqrt(sq / static_cast<double>(s.train_labeled.targets.size()));
        if (s.target_std == 0.0)
            throw ConfigError("split: labeled training targets are constant");
    }

    // Per-feature std over all training rows, used to scale augmentation noise.
    s.feature_std.assign(ds.dim(), 0.0);
    {
        const std::size_t rows = s.train_labeled.features.rows() + s.train_unlabeled.features.rows();
        std::vector<double> mean(ds.dim(), 0.0);
        auto accumulate = [&](const Matrix& x, auto&& f) {
            for (std::size_t i = 0; i < x.rows(); ++i)
                for (std::size_t j = 0; j < x.cols(); ++j) f(j, x(i, j));
        };
        accumulate(s.train_labeled.features, [&](std::size_t j, double v) { mean[j] += v; });
        accumulate(s.train_unlabeled.features, [&](std::size_t j, double v) { mean[j] += v; });
        for (double& v : mean) v /= static_cast<double>(rows);
        accumulate(s.train_labeled.features,
                   [&](std::size_t j, double v) { s.feature_std[j] += (v - mean[j]) * (v - mean[j]); });
        accumulate(s.train_unlabeled.features,
                   [&](std::size_t j, double v) { s.feature_std[j] += (v - mean[j]) * (v - mean[j]); });
        for (double& v : s.feature_std) v = std::sqrt(v / static_cast<double>(rows));
    }
    return s;
}

TriBatch get_tri_batch(SeededRng& rng, const Splits& splits, std::size_t n, std::size_t m,
                       const AugmentConfig& aug, const RegressionNet& net) {
    if (aug.weak_noise_std > aug.strong_noise_std)
        throw ConfigError("get_tri_batch: weak noise exceeds strong noise");
    const auto& lab = splits.train_labeled;
    const auto& unl = splits.train_unlabeled;
    if (lab.targets.size() < 2 * n)
        throw ConfigError("get_tri_batch: labeled pool " + std::to_string(lab.targets.size()) +
                          " < 2n = " + std::to_string(2 * n));
    if (unl.features.rows() < m)
        throw ConfigError("get_tri_batch: unlabeled pool smaller than m");

    std::vector<std::size_t> lab_pool(lab.targets.size());
    std::iota(lab_pool.begin(), lab_pool.end(), 0);
    const auto picked = sample_without_replacement(rng, lab_pool, 2 * n);

    TriBatch tb;
    tb.target_mean = splits.target_mean;
    tb.target_std = splits.target_std;
    tb.labeled_idx.assign(picked.begin(), picked.begin() + n);
    tb.outer_idx.assign(picked.begin() + n, picked.end());

    auto gather = [&](const Matrix& src, const std::vector<std::size_t>& idx) {
        Matrix out(idx.size(), src.cols());
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t j = 0; j < src.cols(); ++j) out(i, j) = src(idx[i], j);
        return out;
    };
    tb.labeled_x = gather(lab.features, tb.labeled_idx);
    tb.outer_x = gather(lab.features, tb.outer_idx);
    tb.labeled_y.resize(n);
    tb.outer_y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        tb.labeled_y[i] = lab.targets[tb.labeled_idx[i]];
        tb.outer_y[i] = lab.targets[tb.outer_idx[i]];
    }

    if (m > 0) {
        std::vector<std::size_t> unl_pool(unl.features.rows());
        std::iota(unl_pool.begin(), unl_pool.end(), 0);
        tb.unlabeled_idx = sample_without_replacement(rng, unl_pool, m);
        const Matrix raw = gather(unl.features, tb.unlabeled_idx);

        tb.unlabeled_weak = raw;
        tb.unlabeled_strong = raw;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < raw.cols(); ++j) {
                const double fs = splits.feature_std[j];
                tb.unlabeled_weak(i, j) += aug.weak_noise_std * fs * rng.next_gauss();
                tb.unlabeled_strong(i, j) += aug.strong_noise_std * fs * rng.next_gauss();
                if (aug.strong_mask_prob > 0.0 && rng.next_double() < aug.strong_mask_prob)
                    tb.unlabeled_strong(i, j) = 0.0;
            }
        }
        tb.pseudo_labels = forward_regression(net, tb.unlabeled_weak).predictions;
    } else {
        tb.unlabeled_weak = Matrix(0, lab.features.cols());
        tb.unlabeled_strong = Matrix(0, lab.features.cols());
    }
    return tb;
}

}  // namespace bssr
