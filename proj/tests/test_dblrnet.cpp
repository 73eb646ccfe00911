#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sted/dblrnet.hpp"
#include "test_support.hpp"

using namespace sted;
using namespace sted::dblrnet;
using testing::grad_check;
using testing::random_tensor;

namespace {

DblrNetConfig small_cfg(bool zero_bde = true) {
    DblrNetConfig cfg;
    cfg.feature_channels = 16;
    cfg.num_ddfe = 2;
    cfg.warp_groups = 4;
    cfg.out_frames = 3;
    cfg.out_channels = 3;
    cfg.voxel_bins = 4;
    cfg.rdb_growth = 8;
    cfg.rdb_layers = 3;
    cfg.zero_init_bde = zero_bde;
    return cfg;
}

}  // namespace

TEST_CASE("sfe: shape contract, zero input, determinism") {
    Rng rng(31);
    DblrNet net(rng, small_cfg());
    Var x(random_tensor(rng, {1, 3, 64, 64}, 0, 1));
    Var f = net.sfe_blur(x);
    CHECK(f.val().shape() == std::vector<int>{1, 16, 32, 32});

    Var zero(Tensor({1, 3, 64, 64}));
    Var fz = net.sfe_blur(zero);  // biases are zero-initialized
    for (int64_t i = 0; i < fz.val().numel(); ++i) CHECK(fz.val()[i] == 0.0);

    Var f2 = net.sfe_blur(x);
    for (int64_t i = 0; i < f.val().numel(); ++i) CHECK(f.val()[i] == f2.val()[i]);

    CHECK_THROWS(net.sfe_blur(Var(random_tensor(rng, {1, 3, 63, 64}))));
}

TEST_CASE("rdb: shape preservation, zeroed fusion is the identity, dense sensitivity") {
    Rng rng(32);
    Rdb rdb(rng, 12, 6, 4);
    Var x(random_tensor(rng, {2, 12, 8, 8}), true);
    Var y = rdb(x);
    CHECK(y.val().shape() == x.val().shape());

    Rdb zeroed = rdb;
    zeroed.fuse.w = Var(Tensor(zeroed.fuse.w.val().shape()), true);
    zeroed.fuse.b = Var(Tensor({12}), true);
    Var yz = zeroed(x);
    for (int64_t i = 0; i < x.val().numel(); ++i) CHECK(yz.val()[i] == x.val()[i]);

    // zeroing an intermediate dense layer changes the output
    Rdb ablated = rdb;
    ablated.dense[1].w = Var(Tensor(ablated.dense[1].w.val().shape()), true);
    ablated.dense[1].b = Var(Tensor(ablated.dense[1].b.val().shape()), true);
    Var ya = ablated(x);
    real diff = 0;
    for (int64_t i = 0; i < y.val().numel(); ++i)
        diff = std::max(diff, std::fabs(ya.val()[i] - y.val()[i]));
    CHECK(diff > 1e-6);
}

TEST_CASE("bde: field count, zero init, gradients into both inputs") {
    Rng rng(33);
    DblrNet net(rng, small_cfg(true));
    Var fb(random_tensor(rng, {1, 16, 8, 8}), true);
    Var fe(random_tensor(rng, {1, 16, 8, 8}), true);
    Var fields = net.bde_fields(fb, fe);
    CHECK(fields.val().shape() == std::vector<int>{1, 8, 8, 8});  // 2L = 8
    for (int64_t i = 0; i < fields.val().numel(); ++i) CHECK(fields.val()[i] == 0.0);

    DblrNet rnd(rng, small_cfg(false));
    auto loss = [&] { return mean_all(square(rnd.bde_fields(fb, fe))); };
    auto rb = grad_check(loss, fb, 50, rng);
    auto re = grad_check(loss, fe, 50, rng);
    CHECK(rb.checked > 0);
    CHECK(re.checked > 0);
    CHECK(rb.max_rel_err < 1e-4);
    CHECK(re.max_rel_err < 1e-4);
}

TEST_CASE("group warp: zero fields identity, L=1 equals plain warp, per-group shifts") {
    Rng rng(34);
    Var f(random_tensor(rng, {1, 8, 6, 10}));
    Var zero_fields(Tensor({1, 4, 6, 10}));
    Var same = warp_horizontal(f, zero_fields);
    for (int64_t i = 0; i < f.val().numel(); ++i) CHECK(same.val()[i] == f.val()[i]);

    Tensor d1({1, 1, 6, 10});
    for (int64_t i = 0; i < d1.numel(); ++i) d1[i] = rng.uniform(-2, 2);
    Var plain = warp_horizontal(f, Var(d1));
    Var grouped = warp_horizontal(f, Var(d1));  // G=1 degenerate grouping
    for (int64_t i = 0; i < plain.val().numel(); ++i)
        CHECK(plain.val()[i] == grouped.val()[i]);

    // integer shifts, one per group of 2 channels
    const int shifts[4] = {0, 1, 2, 3};
    Tensor fields({1, 4, 6, 10});
    for (int g = 0; g < 4; ++g)
        for (int64_t i = 0; i < 60; ++i) fields[g * 60 + i] = shifts[g];
    Var out = warp_horizontal(f, Var(fields));
    for (int c = 0; c < 8; ++c) {
        const int s = shifts[c / 2];
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 10; ++x) {
                const real expect = x - s >= 0 ? f.val()[(c * 6 + y) * 10 + x - s] : real(0);
                CHECK(out.val()[(c * 6 + y) * 10 + x] == doctest::Approx(expect).epsilon(1e-12));
            }
    }

    CHECK_THROWS(warp_horizontal(f, Var(Tensor({1, 3, 6, 10}))));  // 8 % 3 != 0
}

TEST_CASE("aff: convex fixed point, shape, gate saturation") {
    Rng rng(35);
    Aff aff(rng, 8);
    Var x(random_tensor(rng, {1, 8, 6, 6}));
    Var other(random_tensor(rng, {1, 8, 6, 6}));
    CHECK(aff(x, other).val().shape() == x.val().shape());
    CHECK_THROWS(aff(x, Var(random_tensor(rng, {1, 8, 5, 6}))));

    // identity projection makes the fusion term observable: out = x + fused
    Aff probe = aff;
    probe.proj.w = Var(Tensor({8, 8, 1, 1}), true);
    for (int c = 0; c < 8; ++c) probe.proj.w.val()[c * 8 + c] = 1.0;
    probe.proj.b = Var(Tensor({8}), true);
    Var fx = probe(x, x);  // f_self == w_other: fused == x regardless of the gate
    for (int64_t i = 0; i < x.val().numel(); ++i)
        CHECK(fx.val()[i] == doctest::Approx(2 * x.val()[i]).epsilon(1e-14));

    // saturated gate passes f_self through the fusion exactly
    Aff sat = probe;
    sat.gate.b = Var(Tensor({8}, 1e9), true);
    Var fs = sat(x, other);
    for (int64_t i = 0; i < x.val().numel(); ++i) CHECK(fs.val()[i] == 2 * x.val()[i]);
}

TEST_CASE("ddfe: shape preservation and the constructed RDB-only configuration") {
    Rng rng(36);
    DblrNetConfig cfg = small_cfg(true);
    cfg.num_ddfe = 1;
    DblrNet net(rng, cfg);
    ParamMap pm;
    net.collect(pm, "net");

    Var fb(random_tensor(rng, {1, 16, 8, 8}));
    Var fe(random_tensor(rng, {1, 16, 8, 8}));
    auto st = net.ddfe(0, fb, fe);
    CHECK(st.f_blur.val().shape() == fb.val().shape());
    CHECK(st.f_event.val().shape() == fe.val().shape());

    // saturate both gates, zero both projections; the disparity head is
    // already zero-initialized -> stage output equals the RDB-only pair
    for (const char* path : {"net.aff_b", "net.aff_e"}) {
        Tensor& gb = pm.at(std::string(path) + ".gate.b").val();
        for (int64_t i = 0; i < gb.numel(); ++i) gb[i] = 1e9;
        pm.at(std::string(path) + ".proj.w").val().fill(0);
        pm.at(std::string(path) + ".proj.b").val().fill(0);
    }
    auto st2 = net.ddfe(0, fb, fe);
    Var rb = net.rdb_blur(0, fb);
    Var re = net.rdb_event(0, fe);
    for (int64_t i = 0; i < rb.val().numel(); ++i) {
        CHECK(st2.f_blur.val()[i] == rb.val()[i]);
        CHECK(st2.f_event.val()[i] == re.val()[i]);
    }
}

TEST_CASE("forward: frame count, diagnostics bookkeeping, determinism") {
    Rng rng(37);
    DblrNet net(rng, small_cfg());
    Tensor b = random_tensor(rng, {1, 3, 32, 32}, 0, 1);
    Tensor v = random_tensor(rng, {1, 4, 32, 32}, -1, 1);
    DblrNetDiagnostics diag;
    auto frames = net.forward(Var(b), Var(v), &diag);
    CHECK(frames.size() == 3);
    for (const Var& f : frames) CHECK(f.val().shape() == std::vector<int>{1, 3, 32, 32});
    CHECK(diag.stage_fields.size() == 2);  // one set of group disparities per stage
    CHECK(diag.stage_mean_abs_disparity.size() == 2);

    auto frames2 = net.forward(Var(b), Var(v));
    for (size_t m = 0; m < frames.size(); ++m)
        for (int64_t i = 0; i < frames[m].val().numel(); ++i)
            CHECK(frames[m].val()[i] == frames2[m].val()[i]);
}

TEST_CASE("default config emits seven frames") {
    Rng rng(38);
    DblrNetConfig cfg;  // paper-scale defaults
    cfg.voxel_bins = 4;
    DblrNet net(rng, cfg);
    Var b(random_tensor(rng, {1, 3, 16, 16}, 0, 1));
    Var v(random_tensor(rng, {1, 4, 16, 16}, -1, 1));
    CHECK(net.forward(b, v).size() == 7);
}

TEST_CASE("gff: requires the advertised channel count and feeds every frame") {
    Rng rng(39);
    DblrNet net(rng, small_cfg());
    ParamMap pm;
    net.collect(pm, "net");
    // (N+1)*C = 48 channels
    Var taps(random_tensor(rng, {1, 48, 16, 16}));
    auto frames = net.gff({taps});
    CHECK(frames.size() == 3);
    CHECK(frames[0].val().shape() == std::vector<int>{1, 3, 32, 32});
    CHECK_THROWS(net.gff({Var(random_tensor(rng, {1, 40, 16, 16}))}));

    // every output frame sends gradient into the fusion conv
    for (size_t m = 0; m < frames.size(); ++m) {
        pm.zero_grad();
        Var loss = mean_all(square(net.gff({taps})[m]));
        loss.backward();
        CHECK(tensor_max_abs(pm.at("net.gff_fuse.w").grad()) > 0);
    }
}

TEST_CASE("weight sharing: mutating the shared head shifts every stage's diagnostics") {
    Rng rng(40);
    DblrNetConfig cfg = small_cfg(false);
    cfg.num_ddfe = 3;
    DblrNet net(rng, cfg);
    ParamMap pm;
    net.collect(pm, "net");
    Tensor b = random_tensor(rng, {1, 3, 16, 16}, 0, 1);
    Tensor v = random_tensor(rng, {1, 4, 16, 16}, -1, 1);
    DblrNetDiagnostics before;
    net.forward(Var(b), Var(v), &before);
    Tensor& bias = pm.at("net.bde3.b").val();
    for (int64_t i = 0; i < bias.numel(); ++i) bias[i] += 0.37;
    DblrNetDiagnostics after;
    net.forward(Var(b), Var(v), &after);
    for (int s = 0; s < 3; ++s) {
        real diff = 0;
        for (int64_t i = 0; i < before.stage_fields[s].numel(); ++i)
            diff = std::max(diff,
                            std::fabs(after.stage_fields[s][i] - before.stage_fields[s][i]));
        CHECK(diff > 1e-9);
    }
}

TEST_CASE("gradient reaches essentially every parameter from the frame loss") {
    Rng rng(41);
    DblrNet net(rng, small_cfg(false));  // random disparity head too
    ParamMap pm;
    net.collect(pm, "net");
    Var b(random_tensor(rng, {1, 3, 16, 16}, 0, 1));
    Var v(random_tensor(rng, {1, 4, 16, 16}, -1, 1));
    auto frames = net.forward(b, v);
    Var loss;
    for (const Var& f : frames) {
        Var term = mean_all(abs(f));
        loss = loss.defined() ? add(loss, term) : term;
    }
    pm.zero_grad();
    loss.backward();
    int nonzero = 0, total = 0;
    for (auto& [name, var] : pm.params) {
        ++total;
        if (tensor_max_abs(var.grad()) > 0) ++nonzero;
    }
    CHECK(static_cast<real>(nonzero) >= 0.99 * total);
}

TEST_CASE("batch permutation equivariance") {
    Rng rng(42);
    DblrNet net(rng, small_cfg());
    Tensor b = random_tensor(rng, {2, 3, 16, 16}, 0, 1);
    Tensor v = random_tensor(rng, {2, 4, 16, 16}, -1, 1);
    auto swap_batch = [](const Tensor& t) {
        Tensor r(t.shape());
        const int64_t per = t.numel() / 2;
        std::copy(t.data(), t.data() + per, r.data() + per);
        std::copy(t.data() + per, t.data() + 2 * per, r.data());
        return r;
    };
    auto f1 = net.forward(Var(b), Var(v));
    auto f2 = net.forward(Var(swap_batch(b)), Var(swap_batch(v)));
    for (size_t m = 0; m < f1.size(); ++m) {
        Tensor expect = swap_batch(f1[m].val());
        for (int64_t i = 0; i < expect.numel(); ++i) CHECK(f2[m].val()[i] == expect[i]);
    }
}

TEST_CASE("finite outputs under repeated random forwards") {
    Rng rng(43);
    DblrNetConfig cfg = small_cfg();
    cfg.feature_channels = 8;
    cfg.warp_groups = 2;
    cfg.rdb_growth = 4;
    cfg.rdb_layers = 2;
    DblrNet net(rng, cfg);
    for (int trial = 0; trial < 100; ++trial) {
        Var b(random_tensor(rng, {1, 3, 16, 16}, 0, 1));
        Var v(random_tensor(rng, {1, 4, 16, 16}, -1, 1));
        auto frames = net.forward(b, v);
        for (const Var& f : frames) CHECK(all_finite(f.val()));
    }
}

TEST_CASE("config validation") {
    Rng rng(44);
    DblrNetConfig bad = small_cfg();
    bad.feature_channels = 10;  // not divisible by L=4
    CHECK_THROWS(DblrNet(rng, bad));
    bad = small_cfg();
    bad.num_ddfe = 0;
    CHECK_THROWS(DblrNet(rng, bad));
}
