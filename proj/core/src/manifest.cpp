#include "bssr/manifest.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include <json.hpp>

#include "bssr/errors.hpp"

namespace bssr {

using nlohmann::json;

static void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                                const std::string& where) {
    for (const auto& [key, _] : obj.items())
        if (!allowed.count(key))
            throw ConfigError("manifest: unknown key '" + key + "' in " + where);
}

static CorruptionSpec::Mode corruption_mode_from_string(const std::string& s) {
    if (s == "offset") return CorruptionSpec::Mode::Offset;
    if (s == "sign_flip_residual") return CorruptionSpec::Mode::SignFlipResidual;
    if (s == "uniform_replace") return CorruptionSpec::Mode::UniformReplace;
    throw ConfigError("manifest: unknown corruption mode '" + s + "'");
}

static std::string corruption_mode_to_string(CorruptionSpec::Mode m) {
    switch (m) {
        case CorruptionSpec::Mode::Offset: return "offset";
        case CorruptionSpec::Mode::SignFlipResidual: return "sign_flip_residual";
        case CorruptionSpec::Mode::UniformReplace: return "uniform_replace";
    }
    return "?";
}

static const std::set<std::string> kRunKeys = {
    "method", "seed", "gamma", "lambda", "alpha", "alpha_head", "beta", "iterations",
    "n", "m", "hidden_dims", "feature_dim", "ul_hidden", "z_max", "eval_every",
    "lambda_warmup", "normalize_losses", "weak_noise_std", "strong_noise_std",
    "strong_mask_prob", "corrupt_fraction", "corrupt_magnitude", "corrupt_mode"};

static void apply_run_keys(const json& obj, RunConfig& cfg, const std::string& where) {
    reject_unknown_keys(obj, kRunKeys, where);
    if (obj.contains("method")) cfg.method = method_from_string(obj.at("method"));
    if (obj.contains("seed")) cfg.seed = obj.at("seed").get<std::uint64_t>();
    if (obj.contains("gamma")) cfg.gamma = obj.at("gamma").get<double>();
    if (obj.contains("lambda")) cfg.lambda = obj.at("lambda").get<double>();
    if (obj.contains("alpha")) cfg.alpha = obj.at("alpha").get<double>();
    if (obj.contains("alpha_head")) cfg.alpha_head = obj.at("alpha_head").get<double>();
    if (obj.contains("beta")) cfg.beta = obj.at("beta").get<double>();
    if (obj.contains("iterations")) cfg.iterations = obj.at("iterations").get<std::size_t>();
    if (obj.contains("n")) cfg.batch_labeled = obj.at("n").get<std::size_t>();
    if (obj.contains("m")) cfg.batch_unlabeled = obj.at("m").get<std::size_t>();
    if (obj.contains("hidden_dims"))
        cfg.hidden_dims = obj.at("hidden_dims").get<std::vector<std::size_t>>();
    if (obj.contains("feature_dim")) cfg.feature_dim = obj.at("feature_dim").get<std::size_t>();
    if (obj.contains("ul_hidden")) cfg.ul_hidden = obj.at("ul_hidden").get<std::size_t>();
    if (obj.contains("z_max")) cfg.z_max = obj.at("z_max").get<double>();
    if (obj.contains("eval_every")) cfg.eval_every = obj.at("eval_every").get<std::size_t>();
    if (obj.contains("lambda_warmup")) cfg.lambda_warmup = obj.at("lambda_warmup").get<bool>();
    if (obj.contains("normalize_losses"))
        cfg.normalize_losses = obj.at("normalize_losses").get<bool>();
    if (obj.contains("weak_noise_std"))
        cfg.aug.weak_noise_std = obj.at("weak_noise_std").get<double>();
    if (obj.contains("strong_noise_std"))
        cfg.aug.strong_noise_std = obj.at("strong_noise_std").get<double>();
    if (obj.contains("strong_mask_prob"))
        cfg.aug.strong_mask_prob = obj.at("strong_mask_prob").get<double>();
    if (obj.contains("corrupt_fraction"))
        cfg.corruption.fraction = obj.at("corrupt_fraction").get<double>();
    if (obj.contains("corrupt_magnitude"))
        cfg.corruption.magnitude = obj.at("corrupt_magnitude").get<double>();
    if (obj.contains("corrupt_mode"))
        cfg.corruption.mode = corruption_mode_from_string(obj.at("corrupt_mode"));
}

Manifest parse_manifest_text(const std::string& text, const std::string& origin) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("manifest: " + origin + ": " + e.what());
    }
    reject_unknown_keys(root, {"version", "output_dir", "dataset", "split", "defaults", "runs"},
                        "manifest root");

    Manifest mf;
    if (!root.contains("version"))
        throw ConfigError("manifest: missing 'version'");
    mf.version = root.at("version").get<int>();
    if (mf.version != 1)
        throw ConfigError("manifest: unsupported version " + std::to_string(mf.version));
    if (!root.contains("output_dir"))
        throw ConfigError("manifest: missing 'output_dir'");
    mf.output_dir = root.at("output_dir").get<std::string>();

    if (!root.contains("dataset")) throw ConfigError("manifest: missing 'dataset'");
    const json& ds = root.at("dataset");
    reject_unknown_keys(ds, {"type", "path", "task", "n", "seed", "noise_scale"}, "dataset");
    const std::string type = ds.at("type").get<std::string>();
    if (type == "csv") {
        mf.dataset.kind = DatasetSpec::Kind::Csv;
        mf.dataset.csv_path = ds.at("path").get<std::string>();
    } else if (type == "synth") {
        mf.dataset.kind = DatasetSpec::Kind::Synth;
        if (ds.contains("task")) mf.dataset.task = ds.at("task").get<std::string>();
        if (ds.contains("n")) mf.dataset.n = ds.at("n").get<std::size_t>();
        if (ds.contains("seed")) mf.dataset.seed = ds.at("seed").get<std::uint64_t>();
        if (ds.contains("noise_scale"))
            mf.dataset.noise_scale = ds.at("noise_scale").get<double>();
    } else {
        throw ConfigError("manifest: dataset type must be 'synth' or 'csv'");
    }

    if (root.contains("split")) {
        const json& sp = root.at("split");
        reject_unknown_keys(sp, {"test_fraction", "val_fraction"}, "split");
        if (sp.contains("test_fraction")) mf.test_fraction = sp.at("test_fraction").get<double>();
        if (sp.contains("val_fraction")) mf.val_fraction = sp.at("val_fraction").get<double>();
    }

    RunConfig defaults;
    if (root.contains("defaults")) apply_run_keys(root.at("defaults"), defaults, "defaults");

    if (!root.contains("runs") || !root.at("runs").is_array() || root.at("runs").empty())
        throw ConfigError("manifest: no runs");
    std::set<std::string> seen_ids;
    for (std::size_t i = 0; i < root.at("runs").size(); ++i) {
        RunConfig cfg = defaults;
        apply_run_keys(root.at("runs")[i], cfg, "runs[" + std::to_string(i) + "]");
        const std::string id = run_id(cfg);
        if (!seen_ids.insert(id).second)
            throw ConfigError("manifest: duplicate run id '" + id + "'");
        mf.runs.push_back(std::move(cfg));
    }
    return mf;
}

Manifest parse_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("manifest: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_manifest_text(text, path);
}

std::string run_id(const RunConfig& cfg) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(config_hash(cfg)));
    return method_to_string(cfg.method) + "_s" + std::to_string(cfg.seed) + "_" +
           std::string(buf).substr(0, 8);
}

Dataset materialize_dataset(const DatasetSpec& spec) {
    if (spec.kind == DatasetSpec::Kind::Csv) return load_csv(spec.csv_path);
    SeededRng rng(spec.seed);
    return synth_generate(rng, spec.n, spec.task, spec.noise_scale);
}

std::vector<RunOutcome> execute_manifest(const Manifest& manifest, std::size_t jobs) {
    namespace fs = std::filesystem;
    const Dataset dataset = materialize_dataset(manifest.dataset);
    fs::create_directories(manifest.output_dir);

    std::vector<RunOutcome> outcomes(manifest.runs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= manifest.runs.size()) return;
            RunOutcome& out = outcomes[i];
            out.cfg = manifest.runs[i];
            out.id = run_id(out.cfg);
            try {
                SplitConfig sc;
                sc.label_ratio = out.cfg.gamma;
                sc.test_fraction = manifest.test_fraction;
                sc.val_fraction = manifest.val_fraction;
                sc.seed = out.cfg.seed;
                const Splits splits = split(dataset, sc);
                TrainResult res = train(out.cfg, splits);
                out.log = std::move(res.log);
                if (out.log.diverged) {
                    out.failed = true;
                    out.error = "divergence";
                }
                const fs::path dir = fs::path(manifest.output_dir) / out.id;
                fs::create_directories(dir);
                write_runlog_csv(out.log, (dir / "runlog.csv").string());
                checkpoint_save(res.net, res.ul, config_hash(out.cfg),
                                (dir / "model.ckpt").string());
            } catch (const std::exception& e) {
                out.failed = true;
                out.error = e.what();
            }
        }
    };

    const std::size_t n_threads = std::max<std::size_t>(1, std::min(jobs, manifest.runs.size()));
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    write_summary_json(manifest, outcomes,
                       (fs::path(manifest.output_dir) / "summary.json").string());
    return outcomes;
}

static json config_to_json(const RunConfig& cfg) {
    json j;
    j["method"] = method_to_string(cfg.method);
    j["seed"] = cfg.seed;
    j["gamma"] = cfg.gamma;
    j["lambda"] = cfg.lambda;
    j["alpha"] = cfg.alpha;
    j["alpha_head"] = cfg.alpha_head;
    j["beta"] = cfg.beta;
    j["iterations"] = cfg.iterations;
    j["n"] = cfg.batch_labeled;
    j["m"] = cfg.batch_unlabeled;
    j["hidden_dims"] = cfg.hidden_dims;
    j["feature_dim"] = cfg.feature_dim;
    j["ul_hidden"] = cfg.ul_hidden;
    j["z_max"] = cfg.z_max;
    j["eval_every"] = cfg.eval_every;
    j["lambda_warmup"] = cfg.lambda_warmup;
    j["normalize_losses"] = cfg.normalize_losses;
    j["weak_noise_std"] = cfg.aug.weak_noise_std;
    j["strong_noise_std"] = cfg.aug.strong_noise_std;
    j["strong_mask_prob"] = cfg.aug.strong_mask_prob;
    j["corrupt_fraction"] = cfg.corruption.fraction;
    j["corrupt_magnitude"] = cfg.corruption.magnitude;
    j["corrupt_mode"] = corruption_mode_to_string(cfg.corruption.mode);
    return j;
}

void write_summary_json(const Manifest& manifest, const std::vector<RunOutcome>& outcomes,
                        const std::string& path) {
    json runs = json::array();
    std::map<std::string, std::vector<const RunOutcome*>> by_method;
    for (const auto& out : outcomes) {
        json j;
        j["id"] = out.id;
        j["config"] = config_to_json(out.cfg);
        j["failed"] = out.failed;
        if (out.failed) {
            j["error"] = out.error;
        } else {
            j["test"] = {{"mae", out.log.test.mae},
                         {"mse", out.log.test.mse},
                         {"r2", out.log.test.r2}};
            j["final_spearman"] = out.log.final_spearman;
            j["final_gap"] = out.log.final_gap;
            j["wall_ms"] = out.log.wall_ms;
        }
        runs.push_back(std::move(j));
        if (!out.failed) by_method[method_to_string(out.cfg.method)].push_back(&out);
    }

    auto mean_std = [](const std::vector<double>& v) {
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double sq = 0.0;
        for (double x : v) sq += (x - mean) * (x - mean);
        const double sd = std::sqrt(sq / static_cast<double>(v.size()));
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.3f ± %.3f", mean, sd);
        return json{{"mean", mean}, {"std", sd}, {"display", buf}};
    };

    json methods;
    for (const auto& [name, outs] : by_method) {
        std::vector<double> maes, mses, r2s;
        for (const auto* o : outs) {
            maes.push_back(o->log.test.mae);
            mses.push_back(o->log.test.mse);
            r2s.push_back(o->log.test.r2);
        }
        methods[name] = {{"runs", outs.size()},
                         {"test_mae", mean_std(maes)},
                         {"test_mse", mean_std(mses)},
                         {"test_r2", mean_std(r2s)}};
    }

    json root;
    root["version"] = manifest.version;
    root["runs"] = std::move(runs);
    root["methods"] = std::move(methods);

    std::ofstream os(path);
    if (!os) throw IoError("write_summary_json: cannot write " + path);
    os << root.dump(2) << "\n";
}

}  // namespace bssr
