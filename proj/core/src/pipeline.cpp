#include "bssr/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "bssr/errors.hpp"

namespace bssr {

Method method_from_string(const std::string& s) {
    if (s == "supervised") return Method::Supervised;
    if (s == "fully_supervised") return Method::FullySupervised;
    if (s == "fixed_sigma") return Method::FixedSigma;
    if (s == "joint_ul") return Method::JointUl;
    if (s == "bilevel") return Method::Bilevel;
    throw ConfigError("unknown method '" + s + "'");
}

std::string method_to_string(Method m) {
    switch (m) {
        case Method::Supervised: return "supervised";
        case Method::FullySupervised: return "fully_supervised";
        case Method::FixedSigma: return "fixed_sigma";
        case Method::JointUl: return "joint_ul";
        case Method::Bilevel: return "bilevel";
    }
    return "?";
}

static std::string canonical_config_string(const RunConfig& c) {
    std::ostringstream os;
    os.precision(17);
    os << method_to_string(c.method) << '|' << c.gamma << '|' << c.lambda << '|' << c.alpha
       << '|' << c.alpha_head << '|' << c.beta << '|' << c.iterations << '|'
       << c.batch_labeled << '|' << c.batch_unlabeled << '|';
    for (auto h : c.hidden_dims) os << h << ',';
    os << '|' << c.feature_dim << '|' << c.ul_hidden << '|' << c.z_max << '|'
       << c.aug.weak_noise_std << '|' << c.aug.strong_noise_std << '|'
       << c.aug.strong_mask_prob << '|' << c.seed << '|' << c.eval_every << '|'
       << c.lambda_warmup << '|' << c.normalize_losses << '|' << c.corruption.fraction << '|'
       << c.corruption.magnitude << '|' << static_cast<int>(c.corruption.mode);
    return os.str();
}

std::uint64_t config_hash(const RunConfig& cfg) {
    // FNV-1a
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canonical_config_string(cfg)) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

MetricsRecord evaluate(const RegressionNet& net, const Matrix& x,
                       std::span<const double> y) {
    if (y.empty()) throw ParamError("evaluate: empty split");
    const auto fwd = forward_regression(net, x);
    return compute_metrics(fwd.predictions, y);
}

namespace {

struct ProbeResult {
    std::vector<double> z;
    std::vector<std::uint8_t> mask;
    double mean_z = 0.0;
    double spearman = 0.0;  // 0 when undefined
    bool has_both_groups = false;
    double gap = 0.0;
};

// Diagnostics-only probe over unlabeled training rows: pseudo-labels from the
// weak view (with the run's corruption applied), log-variances from the
// strong-view predictions, errors against the shadow truths.
ProbeResult diag_probe(const RunConfig& cfg, const Splits& splits, const RegressionNet& net,
                       const UncertaintyLearner& ul, SeededRng& rng, std::size_t cap) {
    ProbeResult res;
    const auto& unl = splits.train_unlabeled;
    const std::size_t avail = unl.features.rows();
    if (avail == 0) return res;
    const std::size_t k = std::min(cap, avail);

    std::vector<std::size_t> pool(avail);
    std::iota(pool.begin(), pool.end(), 0);
    std::vector<std::size_t> idx(k);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + rng.next_index(avail - i);
        std::swap(pool[i], pool[j]);
        idx[i] = pool[i];
    }

    Matrix weak(k, unl.features.cols());
    Matrix strong(k, unl.features.cols());
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < unl.features.cols(); ++j) {
            const double x = unl.features(idx[i], j);
            const double fs = splits.feature_std[j];
            weak(i, j) = x + cfg.aug.weak_noise_std * fs * rng.next_gauss();
            strong(i, j) = x + cfg.aug.strong_noise_std * fs * rng.next_gauss();
            if (cfg.aug.strong_mask_prob > 0.0 && rng.next_double() < cfg.aug.strong_mask_prob)
                strong(i, j) = 0.0;
        }
    }

    std::vector<double> pseudo = forward_regression(net, weak).predictions;
    res.mask.assign(k, 0);
    if (cfg.corruption.fraction > 0.0) {
        const double scale = cfg.corruption.magnitude * splits.target_std;
        for (std::size_t j = 0; j < k; ++j) {
            if (rng.next_double() >= cfg.corruption.fraction) continue;
            res.mask[j] = 1;
            switch (cfg.corruption.mode) {
                case CorruptionSpec::Mode::Offset:
                    pseudo[j] += (rng.next_double() < 0.5 ? -1.0 : 1.0) * scale;
                    break;
                case CorruptionSpec::Mode::SignFlipResidual:
                    pseudo[j] = 2.0 * splits.target_mean - pseudo[j];
                    break;
                case CorruptionSpec::Mode::UniformReplace:
                    pseudo[j] = rng.next_uniform(splits.target_mean - scale,
                                                 splits.target_mean + scale);
                    break;
            }
        }
    }

    const auto preds = forward_regression(net, strong).predictions;
    const auto ufwd = forward_uncertainty(ul, preds, pseudo, splits.target_mean,
                                          splits.target_std);
    res.z = ufwd.z;
    for (double z : res.z) res.mean_z += z;
    res.mean_z /= static_cast<double>(k);

    std::vector<double> sigma_sq, abs_err;
    for (std::size_t j = 0; j < k; ++j) {
        const double truth = unl.shadow_targets[idx[j]];
        if (!std::isfinite(truth)) continue;
        sigma_sq.push_back(std::exp(res.z[j]));
        abs_err.push_back(std::fabs(pseudo[j] - truth));
    }
    if (sigma_sq.size() >= 3) {
        try {
            res.spearman = sigma_error_spearman(sigma_sq, abs_err);
        } catch (const ParamError&) {
            res.spearman = 0.0;
        }
    }

    bool any_c = false, any_k = false;
    for (auto b : res.mask) (b ? any_c : any_k) = true;
    if (any_c && any_k) {
        res.has_both_groups = true;
        res.gap = uncertainty_separation(res.z, res.mask).gap;
    }
    return res;
}

}  // namespace

TrainResult train(const RunConfig& cfg, const Splits& splits) {
    if (cfg.iterations < 1) throw ConfigError("train: iterations must be >= 1");
    if (cfg.alpha <= 0.0 || cfg.beta <= 0.0) throw ConfigError("train: rates must be > 0");

    const auto t_start = std::chrono::steady_clock::now();

    SeededRng rng(cfg.seed);
    SeededRng diag_rng(cfg.seed ^ 0xd1a6d1a6d1a6d1a6ULL);

    const bool uses_unlabeled =
        cfg.method == Method::FixedSigma || cfg.method == Method::JointUl ||
        cfg.method == Method::Bilevel;
    const std::size_t m_eff = uses_unlabeled ? cfg.batch_unlabeled : 0;

    // Fully-supervised upper bound: shadow truths of the unlabeled pool are
    // revealed and merged into the labeled pool.
    Splits working = splits;
    if (cfg.method == Method::FullySupervised) {
        auto& lab = working.train_labeled;
        const auto& unl = splits.train_unlabeled;
        for (std::size_t i = 0; i < unl.features.rows(); ++i) {
            if (!std::isfinite(unl.shadow_targets[i])) continue;
            lab.targets.push_back(unl.shadow_targets[i]);
            lab.source_rows.push_back(unl.source_rows[i]);
        }
        Matrix merged(lab.targets.size(), splits.train_labeled.features.cols());
        std::size_t row = 0;
        for (std::size_t i = 0; i < splits.train_labeled.features.rows(); ++i, ++row)
            for (std::size_t j = 0; j < merged.cols(); ++j)
                merged(row, j) = splits.train_labeled.features(i, j);
        for (std::size_t i = 0; i < unl.features.rows(); ++i) {
            if (!std::isfinite(unl.shadow_targets[i])) continue;
            for (std::size_t j = 0; j < merged.cols(); ++j)
                merged(row, j) = unl.features(i, j);
            ++row;
        }
        lab.features = std::move(merged);
    }

    RegressionNet net = init_regression_net(rng, working.train_labeled.features.cols(),
                                            cfg.hidden_dims, cfg.feature_dim);
    UncertaintyLearner ul = init_uncertainty_learner(rng, cfg.ul_hidden, cfg.z_max);

    // normalize_losses rescales the sum-form losses to batch means by folding
    // the batch sizes into the effective rates and lambda.
    const double n = static_cast<double>(cfg.batch_labeled);
    const double m = static_cast<double>(std::max<std::size_t>(m_eff, 1));
    const double lam_base = cfg.normalize_losses ? cfg.lambda * n / m : cfg.lambda;
    const double alpha = cfg.normalize_losses ? cfg.alpha / n : cfg.alpha;
    const double alpha_head_raw = cfg.alpha_head < 0.0 ? cfg.alpha : cfg.alpha_head;
    const double alpha_head = cfg.normalize_losses ? alpha_head_raw / n : alpha_head_raw;
    const double beta = cfg.normalize_losses ? cfg.beta / n : cfg.beta;

    TrainResult result{net, ul, {}};
    RunLog& log = result.log;

    const std::size_t warm = std::max<std::size_t>(1, cfg.iterations / 10);
    try {
        for (std::size_t t = 0; t < cfg.iterations; ++t) {
            double lam_t = lam_base;
            if (cfg.lambda_warmup && t < warm)
                lam_t *= static_cast<double>(t) / static_cast<double>(warm);
            if (!uses_unlabeled) lam_t = 0.0;

            TriBatch tb = get_tri_batch(rng, working, cfg.batch_labeled, m_eff, cfg.aug, net);
            if (cfg.corruption.fraction > 0.0 && m_eff > 0)
                tb = corrupt_pseudo_labels(tb, cfg.corruption, rng).batch;

            double align = 0.0;
            const bool do_eval = (t % cfg.eval_every == 0) || (t + 1 == cfg.iterations);
            if (do_eval && m_eff > 0)
                align = alignment_score(net, ul, tb, lam_t);

            auto [updated, rec] = inner_step(net, ul, tb, lam_t, alpha, alpha_head);

            if (cfg.method == Method::Bilevel) {
                const Hypergradient hg = hypergradient_phi(rec, updated, ul, tb, lam_t);
                ul = outer_step(ul, hg, beta);
            } else if (cfg.method == Method::JointUl && m_eff > 0) {
                // Joint descent on the inner loss: dL/dz_j = lambda(1 - e^{-z_j} d_j^2).
                Hypergradient hg;
                hg.per_sample_scalar.resize(m_eff);
                for (std::size_t j = 0; j < m_eff; ++j) {
                    const double d = tb.pseudo_labels[j] - rec.predictions_unlabeled[j];
                    hg.per_sample_scalar[j] =
                        lam_t * (1.0 - std::exp(-rec.ul_forward.z[j]) * d * d);
                }
                hg.phi_grad = backward_uncertainty(ul, rec.ul_forward, hg.per_sample_scalar);
                ul = outer_step(ul, hg, beta);
            }
            net = std::move(updated);

            if (do_eval) {
                EvalRecord r;
                r.iteration = t;
                r.l_sup = rec.loss.l_sup;
                r.l_unsup_fit = rec.loss.l_unsup_fit;
                r.l_unsup_reg = rec.loss.l_unsup_reg;
                const MetricsRecord vm =
                    evaluate(net, working.val.features, working.val.targets);
                r.val_mae = vm.mae;
                r.val_mse = vm.mse;
                r.val_r2 = vm.r2;
                r.alignment = align;
                if (m_eff > 0) {
                    const ProbeResult p = diag_probe(cfg, splits, net, ul, diag_rng, 256);
                    r.mean_z = p.mean_z;
                    r.spearman = p.spearman;
                }
                log.records.push_back(r);
                if (!std::isfinite(vm.mse)) throw NumericError("train: divergence");
            }
        }
    } catch (const NumericError&) {
        log.diverged = true;
    }

    if (!log.diverged) {
        log.test = evaluate(net, working.test.features, working.test.targets);
        if (m_eff > 0) {
            const ProbeResult p = diag_probe(cfg, splits, net, ul, diag_rng, 512);
            log.final_spearman = p.spearman;
            log.final_mean_z = p.mean_z;
            if (p.has_both_groups) log.final_gap = p.gap;
        }
    }

    log.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t_start)
                      .count();
    result.net = std::move(net);
    result.ul = std::move(ul);
    return result;
}

// ---- checkpoint container ----------------------------------------------
// magic "BSSRCKPT", u32 version, u64 config hash, u32 entry count, then
// length-prefixed named double arrays with explicit rows x cols.

static constexpr char kMagic[8] = {'B', 'S', 'S', 'R', 'C', 'K', 'P', 'T'};
static constexpr std::uint32_t kVersion = 1;

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
std::uint32_t get_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}
std::uint64_t get_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

void put_entry(std::ostream& os, const std::string& name, std::uint32_t rows,
               std::uint32_t cols, std::span<const double> data) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, rows);
    put_u32(os, cols);
    os.write(reinterpret_cast<const char*>(data.data()),
             static_cast<std::streamsize>(data.size() * sizeof(double)));
}

struct Entry {
    std::uint32_t rows = 0, cols = 0;
    std::vector<double> data;
};

}  // namespace

void checkpoint_save(const RegressionNet& net, const UncertaintyLearner& ul,
                     std::uint64_t cfg_hash, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("checkpoint_save: cannot write " + path);
    os.write(kMagic, sizeof kMagic);
    put_u32(os, kVersion);
    put_u64(os, cfg_hash);

    const std::uint32_t n_entries =
        static_cast<std::uint32_t>(2 * net.extractor.layers.size() + 2 +
                                   2 * ul.mlp.layers.size() + 1);
    put_u32(os, n_entries);
    for (std::size_t k = 0; k < net.extractor.layers.size(); ++k) {
        const auto& l = net.extractor.layers[k];
        put_entry(os, "extractor." + std::to_string(k) + ".weights",
                  static_cast<std::uint32_t>(l.weights.rows()),
                  static_cast<std::uint32_t>(l.weights.cols()), l.weights.data());
        put_entry(os, "extractor." + std::to_string(k) + ".bias", 1,
                  static_cast<std::uint32_t>(l.bias.size()), l.bias);
    }
    put_entry(os, "head.weights", 1, static_cast<std::uint32_t>(net.head_weights.size()),
              net.head_weights);
    const double hb[1] = {net.head_bias};
    put_entry(os, "head.bias", 1, 1, hb);
    for (std::size_t k = 0; k < ul.mlp.layers.size(); ++k) {
        const auto& l = ul.mlp.layers[k];
        put_entry(os, "ul." + std::to_string(k) + ".weights",
                  static_cast<std::uint32_t>(l.weights.rows()),
                  static_cast<std::uint32_t>(l.weights.cols()), l.weights.data());
        put_entry(os, "ul." + std::to_string(k) + ".bias", 1,
                  static_cast<std::uint32_t>(l.bias.size()), l.bias);
    }
    const double zm[1] = {ul.z_max};
    put_entry(os, "ul.z_max", 1, 1, zm);
    if (!os) throw IoError("checkpoint_save: write failed for " + path);
}

Checkpoint checkpoint_load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint_load: cannot open " + path);
    char magic[8];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw IoError("checkpoint_load: bad magic in " + path);
    const std::uint32_t version = get_u32(is);
    if (version != kVersion)
        throw IoError("checkpoint_load: unsupported version " + std::to_string(version));

    Checkpoint ck;
    ck.config_hash = get_u64(is);
    const std::uint32_t n_entries = get_u32(is);
    std::map<std::string, Entry> entries;
    for (std::uint32_t e = 0; e < n_entries; ++e) {
        const std::uint32_t name_len = get_u32(is);
        if (!is || name_len > 4096) throw IoError("checkpoint_load: corrupt entry header");
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        Entry ent;
        ent.rows = get_u32(is);
        ent.cols = get_u32(is);
        ent.data.resize(static_cast<std::size_t>(ent.rows) * ent.cols);
        is.read(reinterpret_cast<char*>(ent.data.data()),
                static_cast<std::streamsize>(ent.data.size() * sizeof(double)));
        if (!is) throw IoError("checkpoint_load: truncated entry '" + name + "'");
        entries[name] = std::move(ent);
    }

    auto take = [&](const std::string& name) -> Entry& {
        auto it = entries.find(name);
        if (it == entries.end())
            throw IoError("checkpoint_load: missing entry '" + name + "'");
        return it->second;
    };
    auto load_mlp = [&](const std::string& prefix) {
        MlpParams mlp;
        for (std::size_t k = 0;; ++k) {
            const std::string wname = prefix + "." + std::to_string(k) + ".weights";
            if (!entries.count(wname)) break;
            Entry& w = take(wname);
            Entry& b = take(prefix + "." + std::to_string(k) + ".bias");
            if (b.cols != w.cols)
                throw IoError("checkpoint_load: dim mismatch in '" + wname + "'");
            MlpLayer l;
            l.weights = Matrix(w.rows, w.cols);
            l.weights.data() = w.data;
            l.bias = b.data;
            mlp.layers.push_back(std::move(l));
        }
        if (mlp.layers.empty())
            throw IoError("checkpoint_load: no layers under '" + prefix + "'");
        // Hidden layers ReLU, final layer identity, by construction.
        for (auto& l : mlp.layers) l.act = Activation::Relu;
        mlp.layers.back().act = Activation::Identity;
        mlp.validate();
        return mlp;
    };

    ck.net.extractor = load_mlp("extractor");
    Entry& hw = take("head.weights");
    if (hw.cols != ck.net.extractor.output_dim())
        throw IoError("checkpoint_load: head width does not match extractor output");
    ck.net.head_weights = hw.data;
    ck.net.head_bias = take("head.bias").data.at(0);
    ck.ul.mlp = load_mlp("ul");
    ck.ul.z_max = take("ul.z_max").data.at(0);
    return ck;
}

void write_runlog_csv(const RunLog& log, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("write_runlog_csv: cannot write " + path);
    os << "iteration,l_sup,l_unsup_fit,l_unsup_reg,val_mae,val_mse,val_r2,"
          "alignment,mean_z,spearman\n";
    char buf[64];
    auto put = [&](double v, char sep) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        os << buf << sep;
    };
    for (const auto& r : log.records) {
        os << r.iteration << ',';
        put(r.l_sup, ',');
        put(r.l_unsup_fit, ',');
        put(r.l_unsup_reg, ',');
        put(r.val_mae, ',');
        put(r.val_mse, ',');
        put(r.val_r2, ',');
        put(r.alignment, ',');
        put(r.mean_z, ',');
        put(r.spearman, '\n');
    }
}

}  // namespace bssr
