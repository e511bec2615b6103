// Batch experiment runner: `bssr run <manifest>`, `bssr gradcheck`, `bssr synth`.
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bssr/errors.hpp"
#include "bssr/manifest.hpp"

namespace {

std::vector<std::uint64_t> parse_seed_spec(const std::string& spec) {
    const auto pos = spec.find("..");
    std::vector<std::uint64_t> seeds;
    if (pos == std::string::npos) {
        // A single count N means seeds 0..N-1.
        const auto count = std::stoull(spec);
        for (std::uint64_t s = 0; s < count; ++s) seeds.push_back(s);
    } else {
        const auto lo = std::stoull(spec.substr(0, pos));
        const auto hi = std::stoull(spec.substr(pos + 2));
        for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    }
    if (seeds.empty()) throw bssr::ConfigError("empty seed spec '" + spec + "'");
    return seeds;
}

int cmd_run(const std::string& manifest_path, std::size_t jobs) {
    bssr::Manifest manifest;
    try {
        manifest = bssr::parse_manifest(manifest_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    const auto outcomes = bssr::execute_manifest(manifest, jobs);
    bool any_failed = false;
    for (const auto& out : outcomes) {
        if (out.failed) {
            any_failed = true;
            std::cerr << "FAILED " << out.id << ": " << out.error << "\n";
        } else {
            std::printf("%-32s test_mae=%.4f test_mse=%.4f test_r2=%.4f (%.0f ms)\n",
                        out.id.c_str(), out.log.test.mae, out.log.test.mse,
                        out.log.test.r2, out.log.wall_ms);
        }
    }
    std::printf("summary: %s/summary.json\n", manifest.output_dir.c_str());
    return any_failed ? 3 : 0;
}

int cmd_gradcheck(const std::string& seed_spec, double tolerance, double cosine_min,
                  double alpha) {
    const auto seeds = parse_seed_spec(seed_spec);
    std::printf("%6s %12s %12s %12s %12s %10s %10s %8s\n", "seed", "inner", "outer",
                "ul_phi", "head_only", "full_cos", "full_rel", "t1_slope");
    bool ok = true;
    double worst = 0.0;
    std::string worst_name;
    auto track = [&](std::uint64_t seed, const char* name, double err, double tol) {
        if (err > worst) {
            worst = err;
            worst_name = std::string(name) + " @ seed " + std::to_string(seed);
        }
        if (err > tol) ok = false;
    };
    for (const auto seed : seeds) {
        const auto inst = bssr::make_oracle_instance(seed);
        const auto r = bssr::run_gradcheck_instance(inst, alpha);
        std::printf("%6llu %12.3e %12.3e %12.3e %12.3e %10.6f %10.3e %8.3f\n",
                    static_cast<unsigned long long>(seed), r.inner_theta_rel_err,
                    r.outer_theta_rel_err, r.ul_phi_rel_err, r.hypergrad_head_only_rel_err,
                    r.hypergrad_full_cosine, r.hypergrad_full_rel_err, r.theorem1_slope);
        track(seed, "inner_theta", r.inner_theta_rel_err, tolerance);
        track(seed, "outer_theta", r.outer_theta_rel_err, tolerance);
        track(seed, "ul_phi", r.ul_phi_rel_err, tolerance);
        track(seed, "hypergrad_head_only", r.hypergrad_head_only_rel_err, tolerance);
        if (r.hypergrad_full_cosine < cosine_min) ok = false;
        if (r.theorem1_slope < 0.8 || r.theorem1_slope > 1.2) ok = false;
    }
    if (!ok) {
        std::printf("FAIL (worst rel err: %s = %.3e)\n", worst_name.c_str(), worst);
        return 1;
    }
    std::printf("OK\n");
    return 0;
}

int cmd_synth(const std::string& task, std::size_t n, std::uint64_t seed,
              const std::string& out_path) {
    bssr::SeededRng rng(seed);
    const auto ds = bssr::synth_generate(rng, n, task);
    bssr::write_csv(ds, out_path);
    std::printf("wrote %zu rows to %s\n", ds.size(), out_path.c_str());
    return 0;
}

std::size_t default_jobs() {
    if (const char* env = std::getenv("BSSR_JOBS")) {
        const auto v = std::strtoull(env, nullptr, 10);
        if (v > 0) return static_cast<std::size_t>(v);
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"uncertainty-aware pseudo-labeling for semi-supervised regression"};
    app.require_subcommand(1);

    std::string manifest_path;
    std::size_t jobs = default_jobs();
    auto* run = app.add_subcommand("run", "execute a manifest of training runs");
    run->add_option("manifest", manifest_path, "path to manifest JSON")->required();
    run->add_option("--jobs", jobs, "max concurrent runs (default $BSSR_JOBS or 1)");

    std::string seed_spec = "5";
    double tolerance = 1e-6;
    double cosine_min = 0.99;
    double alpha = 1e-3;
    auto* gc = app.add_subcommand("gradcheck", "finite-difference oracle suite");
    gc->add_option("--seeds", seed_spec, "seed count N or inclusive range a..b");
    gc->add_option("--tolerance", tolerance, "rel-err bound for exact checks");
    gc->add_option("--cosine-min", cosine_min, "cosine bound for the full unroll");
    gc->add_option("--alpha", alpha, "inner-step size for hypergradient checks");

    std::string task = "sine-hetero", out_path = "synth.csv";
    std::size_t n = 2000;
    std::uint64_t seed = 0;
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset CSV");
    synth->add_option("--task", task, "sine-hetero | poly-hetero");
    synth->add_option("--n", n, "number of samples");
    synth->add_option("--seed", seed, "generator seed");
    synth->add_option("--out", out_path, "output CSV path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(manifest_path, jobs);
        if (gc->parsed()) return cmd_gradcheck(seed_spec, tolerance, cosine_min, alpha);
        if (synth->parsed()) return cmd_synth(task, n, seed, out_path);
    } catch (const bssr::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
