#include <cstdio>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "bssr/errors.hpp"
#include "bssr/pipeline.hpp"

using namespace bssr;

namespace {

Splits small_splits(std::uint64_t seed = 1, std::size_t n = 600) {
    SeededRng rng(seed);
    const auto ds = synth_generate(rng, n, "sine-hetero");
    SplitConfig cfg;
    cfg.label_ratio = 0.3;
    cfg.seed = seed;
    return split(ds, cfg);
}

RunConfig quick_config(Method m) {
    RunConfig cfg;
    cfg.method = m;
    cfg.iterations = 60;
    cfg.eval_every = 20;
    cfg.batch_labeled = 16;
    cfg.batch_unlabeled = 16;
    cfg.hidden_dims = {16};
    cfg.feature_dim = 8;
    cfg.ul_hidden = 8;
    cfg.alpha = 1e-3;
    cfg.beta = 1e-3;
    cfg.seed = 3;
    return cfg;
}

}  // namespace

TEST_CASE("method string round trip") {
    for (Method m : {Method::Supervised, Method::FullySupervised, Method::FixedSigma,
                     Method::JointUl, Method::Bilevel})
        CHECK(method_from_string(method_to_string(m)) == m);
    CHECK_THROWS_AS(method_from_string("frobnicate"), ConfigError);
}

TEST_CASE("config_hash is stable and sensitive") {
    const RunConfig a = quick_config(Method::Bilevel);
    CHECK(config_hash(a) == config_hash(a));
    RunConfig b = a;
    b.lambda = a.lambda + 1e-9;
    CHECK(config_hash(b) != config_hash(a));
    RunConfig c = a;
    c.method = Method::FixedSigma;
    CHECK(config_hash(c) != config_hash(a));
    RunConfig d = a;
    d.seed = a.seed + 1;
    CHECK(config_hash(d) != config_hash(a));
}

TEST_CASE("train is deterministic in the seed") {
    const auto sp = small_splits();
    const RunConfig cfg = quick_config(Method::Bilevel);
    const auto r1 = train(cfg, sp);
    const auto r2 = train(cfg, sp);
    CHECK(r1.net.flatten() == r2.net.flatten());
    CHECK(r1.ul.flatten() == r2.ul.flatten());
    CHECK(r1.log.test.mse == r2.log.test.mse);
    REQUIRE(r1.log.records.size() == r2.log.records.size());
    for (std::size_t i = 0; i < r1.log.records.size(); ++i)
        CHECK(r1.log.records[i].val_mse == r2.log.records[i].val_mse);
}

TEST_CASE("supervised training reduces validation error") {
    const auto sp = small_splits(2);
    RunConfig cfg = quick_config(Method::Supervised);
    cfg.iterations = 400;
    cfg.eval_every = 50;
    cfg.normalize_losses = true;
    cfg.alpha = 5e-3;
    const auto r = train(cfg, sp);
    REQUIRE(!r.log.diverged);
    REQUIRE(r.log.records.size() >= 2);
    CHECK(r.log.records.back().val_mse < r.log.records.front().val_mse);
    CHECK(r.log.test.n == sp.test.targets.size());
    // no unlabeled term for the supervised baseline
    for (const auto& rec : r.log.records) {
        CHECK(rec.l_unsup_fit == 0.0);
        CHECK(rec.l_unsup_reg == 0.0);
        CHECK(rec.mean_z == 0.0);
    }
}

TEST_CASE("fixed_sigma never moves the uncertainty learner") {
    const auto sp = small_splits(4);
    RunConfig cfg = quick_config(Method::FixedSigma);
    const auto r = train(cfg, sp);
    SeededRng probe_rng(99);
    const auto fresh = init_uncertainty_learner(probe_rng, cfg.ul_hidden, cfg.z_max);
    // output layer stays identically zero, so z == 0 everywhere
    CHECK(r.ul.mlp.layers.back().weights.data() ==
          fresh.mlp.layers.back().weights.data());
    CHECK(r.log.final_mean_z == 0.0);
}

TEST_CASE("bilevel training populates diagnostics") {
    const auto sp = small_splits(5);
    RunConfig cfg = quick_config(Method::Bilevel);
    cfg.corruption.fraction = 0.3;
    cfg.corruption.magnitude = 3.0;
    const auto r = train(cfg, sp);
    REQUIRE(!r.log.diverged);
    REQUIRE(!r.log.records.empty());
    // the learner has moved off its zero init
    CHECK(max_abs(r.ul.mlp.layers.back().weights.data()) > 0.0);
    bool any_alignment = false;
    for (const auto& rec : r.log.records)
        if (rec.alignment != 0.0) any_alignment = true;
    CHECK(any_alignment);
    CHECK(r.log.wall_ms > 0.0);
}

TEST_CASE("divergence is caught and flagged") {
    const auto sp = small_splits(6);
    RunConfig cfg = quick_config(Method::Supervised);
    cfg.alpha = 1e6;  // guaranteed blow-up
    cfg.iterations = 200;
    cfg.eval_every = 10;
    const auto r = train(cfg, sp);
    CHECK(r.log.diverged);
}

TEST_CASE("train validates its config") {
    const auto sp = small_splits(7);
    RunConfig cfg = quick_config(Method::Supervised);
    cfg.iterations = 0;
    CHECK_THROWS_AS(train(cfg, sp), ConfigError);
    cfg = quick_config(Method::Supervised);
    cfg.alpha = 0.0;
    CHECK_THROWS_AS(train(cfg, sp), ConfigError);
}

TEST_CASE("normalize_losses reproduces the sum-form trajectory") {
    // Rescaling the sums to means while multiplying the rates by n must give
    // the identical parameter trajectory.
    const auto sp = small_splits(8);
    RunConfig sum_cfg = quick_config(Method::Bilevel);
    sum_cfg.iterations = 30;
    RunConfig mean_cfg = sum_cfg;
    mean_cfg.normalize_losses = true;
    mean_cfg.alpha = sum_cfg.alpha * static_cast<double>(sum_cfg.batch_labeled);
    mean_cfg.beta = sum_cfg.beta * static_cast<double>(sum_cfg.batch_labeled);
    mean_cfg.lambda =
        sum_cfg.lambda * static_cast<double>(sum_cfg.batch_unlabeled) /
        static_cast<double>(sum_cfg.batch_labeled);
    const auto a = train(sum_cfg, sp);
    const auto b = train(mean_cfg, sp);
    const auto fa = a.net.flatten();
    const auto fb = b.net.flatten();
    REQUIRE(fa.size() == fb.size());
    CHECK(max_abs_diff(fa, fb) <= 1e-9);
}

TEST_CASE("checkpoint round trip is bit-exact") {
    SeededRng rng(11);
    const auto net = init_regression_net(rng, 3, {8, 8}, 4);
    auto ul = init_uncertainty_learner(rng, 8, 5.5);
    for (double& w : ul.mlp.layers.back().weights.data()) w = rng.next_gauss();
    const std::string path = "/tmp/bssr_test_ckpt.bin";
    checkpoint_save(net, ul, 0xdeadbeefULL, path);
    const auto ck = checkpoint_load(path);
    CHECK(ck.config_hash == 0xdeadbeefULL);
    CHECK(ck.net.flatten() == net.flatten());
    CHECK(ck.ul.flatten() == ul.flatten());
    CHECK(ck.ul.z_max == 5.5);
    // reconstructed activations follow the hidden-ReLU / final-identity rule
    CHECK(ck.net.extractor.layers[0].act == Activation::Relu);
    CHECK(ck.net.extractor.layers.back().act == Activation::Identity);
    std::remove(path.c_str());
}

TEST_CASE("checkpoint_load rejects malformed files") {
    const std::string path = "/tmp/bssr_test_badckpt.bin";
    {
        std::ofstream os(path, std::ios::binary);
        os << "NOTACKPTxxxxxxxxxxxxxxxx";
    }
    CHECK_THROWS_AS(checkpoint_load(path), IoError);
    CHECK_THROWS_AS(checkpoint_load("/tmp/bssr_missing_ckpt.bin"), IoError);

    // truncate a valid checkpoint
    SeededRng rng(12);
    const auto net = init_regression_net(rng, 2, {4}, 3);
    const auto ul = init_uncertainty_learner(rng, 4, 6.0);
    checkpoint_save(net, ul, 1, path);
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string full = buf.str();
    {
        std::ofstream os(path, std::ios::binary);
        os.write(full.data(), static_cast<std::streamsize>(full.size() / 2));
    }
    CHECK_THROWS_AS(checkpoint_load(path), IoError);
    std::remove(path.c_str());
}

TEST_CASE("write_runlog_csv emits the fixed header and one row per record") {
    RunLog log;
    EvalRecord r;
    r.iteration = 0;
    r.l_sup = 1.25;
    r.val_mae = 0.5;
    log.records.push_back(r);
    r.iteration = 100;
    log.records.push_back(r);
    const std::string path = "/tmp/bssr_test_runlog.csv";
    write_runlog_csv(log, path);
    std::ifstream in(path);
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line ==
          "iteration,l_sup,l_unsup_fit,l_unsup_reg,val_mae,val_mse,val_r2,"
          "alignment,mean_z,spearman");
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        std::size_t commas = 0;
        for (char c : line) commas += (c == ',');
        CHECK(commas == 9);
    }
    CHECK(rows == 2);
    std::remove(path.c_str());
}

TEST_CASE("runlog csv is byte-identical across repeated writes") {
    const auto sp = small_splits(9);
    RunConfig cfg = quick_config(Method::Bilevel);
    const auto r = train(cfg, sp);
    const std::string p1 = "/tmp/bssr_test_runlog1.csv";
    const std::string p2 = "/tmp/bssr_test_runlog2.csv";
    write_runlog_csv(r.log, p1);
    write_runlog_csv(r.log, p2);
    std::ifstream a(p1), b(p2);
    std::ostringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(sa.str() == sb.str());
    CHECK(!sa.str().empty());
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}
