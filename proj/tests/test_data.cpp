#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <doctest.h>

#include "bssr/data.hpp"
#include "bssr/errors.hpp"

using namespace bssr;

namespace {

std::string temp_path(const char* name) {
    return std::string("/tmp/bssr_test_") + name;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

}  // namespace

TEST_CASE("synth_generate shapes, determinism and task validation") {
    SeededRng a(7), b(7);
    const auto d1 = synth_generate(a, 100, "sine-hetero");
    const auto d2 = synth_generate(b, 100, "sine-hetero");
    CHECK(d1.size() == 100);
    CHECK(d1.dim() == 1);
    CHECK(d1.labeled_count() == 100);
    CHECK(d1.features == d2.features);
    CHECK(d1.targets == d2.targets);

    SeededRng c(7);
    const auto d3 = synth_generate(c, 50, "poly-hetero");
    CHECK(d3.dim() == 3);

    SeededRng e(7);
    CHECK_THROWS_AS(synth_generate(e, 10, "nope"), ParamError);
    CHECK_THROWS_AS(synth_generate(e, 0, "sine-hetero"), ParamError);
}

TEST_CASE("synth sine-hetero stays in range and tracks the mean curve") {
    SeededRng rng(3);
    const auto ds = synth_generate(rng, 4000, "sine-hetero");
    double worst = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double x = ds.features(i, 0);
        CHECK(x >= -3.0);
        CHECK(x < 3.0);
        const double mean = std::sin(2.0 * x) + 0.5 * x;
        worst = std::max(worst, std::fabs(ds.targets[i] - mean));
    }
    // noise std is at most 0.65; 6 sigma is a generous envelope
    CHECK(worst <= 6.0 * 0.65);
}

TEST_CASE("noise_scale 0 makes synth targets deterministic functions of x") {
    SeededRng rng(4);
    const auto ds = synth_generate(rng, 200, "sine-hetero", 0.0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double x = ds.features(i, 0);
        CHECK(ds.targets[i] == doctest::Approx(std::sin(2.0 * x) + 0.5 * x).epsilon(1e-12));
    }
}

TEST_CASE("csv round trip is byte-faithful in values") {
    SeededRng rng(9);
    auto ds = synth_generate(rng, 64, "poly-hetero");
    ds.labeled[3] = 0;
    ds.targets[3] = std::nan("");
    ds.refresh_target_stats();
    const auto path = temp_path("roundtrip.csv");
    write_csv(ds, path);
    const auto back = load_csv(path);
    CHECK(back.size() == ds.size());
    CHECK(back.dim() == ds.dim());
    CHECK(back.features == ds.features);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(back.labeled[i] == ds.labeled[i]);
        if (ds.labeled[i]) CHECK(back.targets[i] == ds.targets[i]);
    }
    CHECK(back.target_mean == doctest::Approx(ds.target_mean).epsilon(1e-12));
    std::remove(path.c_str());
}

TEST_CASE("load_csv parses unlabeled rows via the empty target field") {
    const auto path = temp_path("mixed.csv");
    write_text(path, "x1,x2,target\n1.0,2.0,3.5\n4.0,5.0,\n");
    const auto ds = load_csv(path);
    CHECK(ds.size() == 2);
    CHECK(ds.labeled_count() == 1);
    CHECK(ds.labeled[0] == 1);
    CHECK(ds.labeled[1] == 0);
    CHECK(ds.targets[0] == 3.5);
    CHECK(ds.target_mean == 3.5);
    std::remove(path.c_str());
}

TEST_CASE("load_csv error cases") {
    const auto missing_target = temp_path("no_target.csv");
    write_text(missing_target, "x1,x2\n1,2\n");
    CHECK_THROWS_AS(load_csv(missing_target), IoError);

    const auto bad_value = temp_path("bad_value.csv");
    write_text(bad_value, "x1,target\nabc,1.0\n");
    CHECK_THROWS_AS(load_csv(bad_value), IoError);

    const auto ragged = temp_path("ragged.csv");
    write_text(ragged, "x1,x2,target\n1,2,3\n1,2\n");
    CHECK_THROWS_AS(load_csv(ragged), IoError);

    CHECK_THROWS_AS(load_csv("/tmp/bssr_definitely_missing.csv"), IoError);
    std::remove(missing_target.c_str());
    std::remove(bad_value.c_str());
    std::remove(ragged.c_str());
}

TEST_CASE("split partitions rows with no overlap and correct sizes") {
    SeededRng rng(11);
    const auto ds = synth_generate(rng, 1000, "sine-hetero");
    SplitConfig cfg;
    cfg.label_ratio = 0.1;
    cfg.test_fraction = 0.2;
    cfg.val_fraction = 0.2;
    cfg.seed = 5;
    const auto sp = split(ds, cfg);

    CHECK(sp.test.targets.size() == 200);
    CHECK(sp.val.targets.size() == 200);
    // 600 training rows, gamma = 0.1 -> 60 stay labeled
    CHECK(sp.train_labeled.targets.size() == 60);
    CHECK(sp.train_unlabeled.shadow_targets.size() == 540);

    std::set<std::size_t> seen;
    auto absorb = [&](const std::vector<std::size_t>& rows) {
        for (auto r : rows) {
            CHECK(seen.insert(r).second);  // no row appears twice
            CHECK(r < ds.size());
        }
    };
    absorb(sp.test.source_rows);
    absorb(sp.val.source_rows);
    absorb(sp.train_labeled.source_rows);
    absorb(sp.train_unlabeled.source_rows);
    CHECK(seen.size() == 1000);

    // shadow targets are the true targets of the demoted rows
    for (std::size_t i = 0; i < sp.train_unlabeled.source_rows.size(); ++i)
        CHECK(sp.train_unlabeled.shadow_targets[i] ==
              ds.targets[sp.train_unlabeled.source_rows[i]]);

    CHECK(sp.feature_std.size() == ds.dim());
    for (double s : sp.feature_std) CHECK(s > 0.0);
    CHECK(sp.target_std > 0.0);
}

TEST_CASE("split is deterministic in its seed and sensitive to it") {
    SeededRng rng(12);
    const auto ds = synth_generate(rng, 400, "sine-hetero");
    SplitConfig cfg;
    cfg.seed = 9;
    const auto a = split(ds, cfg);
    const auto b = split(ds, cfg);
    CHECK(a.train_labeled.source_rows == b.train_labeled.source_rows);
    CHECK(a.test.source_rows == b.test.source_rows);
    cfg.seed = 10;
    const auto c = split(ds, cfg);
    CHECK(a.test.source_rows != c.test.source_rows);
}

TEST_CASE("split parameter validation") {
    SeededRng rng(13);
    const auto ds = synth_generate(rng, 100, "sine-hetero");
    SplitConfig cfg;
    cfg.label_ratio = 0.0;
    CHECK_THROWS_AS(split(ds, cfg), ConfigError);
    cfg.label_ratio = 0.5;
    cfg.test_fraction = 0.6;
    cfg.val_fraction = 0.5;
    CHECK_THROWS_AS(split(ds, cfg), ConfigError);
}

TEST_CASE("get_tri_batch invariants") {
    SeededRng rng(21);
    const auto ds = synth_generate(rng, 500, "sine-hetero");
    SplitConfig cfg;
    cfg.seed = 2;
    const auto sp = split(ds, cfg);
    SeededRng net_rng(3);
    const auto net = init_regression_net(net_rng, 1, {16}, 8);
    AugmentConfig aug;

    SeededRng brng(4);
    const auto tb = get_tri_batch(brng, sp, 8, 12, aug, net);
    CHECK(tb.n() == 8);
    CHECK(tb.m() == 12);
    CHECK(tb.labeled_x.rows() == 8);
    CHECK(tb.outer_x.rows() == 8);
    CHECK(tb.unlabeled_weak.rows() == 12);
    CHECK(tb.unlabeled_strong.rows() == 12);
    CHECK(tb.target_mean == sp.target_mean);
    CHECK(tb.target_std == sp.target_std);

    // B_l and B-hat_l are index-disjoint
    std::set<std::size_t> li(tb.labeled_idx.begin(), tb.labeled_idx.end());
    for (auto i : tb.outer_idx) CHECK(li.count(i) == 0);

    // pseudo-labels are the net's predictions on the weak view
    const auto fwd = forward_regression(net, tb.unlabeled_weak);
    CHECK(tb.pseudo_labels == fwd.predictions);

    // weak view stays close to the source features; strong view may mask
    for (std::size_t j = 0; j < tb.m(); ++j) {
        const double src = sp.train_unlabeled.features(tb.unlabeled_idx[j], 0);
        CHECK(std::fabs(tb.unlabeled_weak(j, 0) - src) <=
              5.0 * aug.weak_noise_std * sp.feature_std[0]);
    }
}

TEST_CASE("get_tri_batch rejects oversized requests") {
    SeededRng rng(22);
    const auto ds = synth_generate(rng, 120, "sine-hetero");
    SplitConfig cfg;
    const auto sp = split(ds, cfg);  // few labeled rows under gamma = 0.1
    SeededRng net_rng(3);
    const auto net = init_regression_net(net_rng, 1, {8}, 4);
    SeededRng brng(4);
    // 2n disjoint labeled picks must fit in the labeled pool
    CHECK_THROWS_AS(get_tri_batch(brng, sp, 64, 4, AugmentConfig{}, net), ConfigError);
}

TEST_CASE("strong augmentation masks features at roughly the configured rate") {
    SeededRng rng(23);
    const auto ds = synth_generate(rng, 2000, "poly-hetero");
    SplitConfig cfg;
    cfg.label_ratio = 0.9;
    const auto sp = split(ds, cfg);
    SeededRng net_rng(5);
    const auto net = init_regression_net(net_rng, 3, {8}, 4);
    AugmentConfig aug;
    aug.weak_noise_std = 0.0;
    aug.strong_noise_std = 0.0;
    aug.strong_mask_prob = 0.3;
    SeededRng brng(6);
    std::size_t masked = 0, total = 0;
    for (int rep = 0; rep < 40; ++rep) {
        const auto tb = get_tri_batch(brng, sp, 4, 32, aug, net);
        for (std::size_t j = 0; j < tb.m(); ++j)
            for (std::size_t c = 0; c < 3; ++c) {
                ++total;
                if (tb.unlabeled_strong(j, c) == 0.0 && tb.unlabeled_weak(j, c) != 0.0) ++masked;
            }
    }
    const double rate = static_cast<double>(masked) / static_cast<double>(total);
    CHECK(rate == doctest::Approx(0.3).epsilon(0.15));
}
