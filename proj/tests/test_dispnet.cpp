#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sted/dispnet.hpp"
#include "test_support.hpp"

using namespace sted;
using namespace sted::dispnet;
using testing::random_tensor;

namespace {

DispNetConfig small_cfg() {
    DispNetConfig cfg;
    cfg.widths = {8, 12, 16, 24};
    cfg.image_channels = 3;
    cfg.voxel_bins = 4;
    cfg.max_disparity = 48;
    return cfg;
}

}  // namespace

TEST_CASE("output shape, finiteness and clamp range on random input") {
    Rng rng(21);
    DispNet net(rng, small_cfg());
    Var b(random_tensor(rng, {1, 3, 64, 64}, 0, 1));
    Var v(random_tensor(rng, {1, 4, 64, 64}, -1, 1));
    Var d = net.forward(b, v);
    CHECK(d.val().shape() == std::vector<int>{1, 1, 64, 64});
    for (int64_t i = 0; i < d.val().numel(); ++i) {
        CHECK(std::isfinite(d.val()[i]));
        CHECK(d.val()[i] >= 0.0);
        CHECK(d.val()[i] <= 48.0);
    }
}

TEST_CASE("determinism: identical calls produce bitwise-identical outputs") {
    Rng rng(22);
    DispNet net(rng, small_cfg());
    Tensor bt = random_tensor(rng, {2, 3, 32, 32}, 0, 1);
    Tensor vt = random_tensor(rng, {2, 4, 32, 32}, -1, 1);
    Var d1 = net.forward(Var(bt), Var(vt));
    Var d2 = net.forward(Var(bt), Var(vt));
    for (int64_t i = 0; i < d1.val().numel(); ++i) CHECK(d1.val()[i] == d2.val()[i]);
}

TEST_CASE("per-scale residual telescoping identity") {
    Rng rng(23);
    DispNet net(rng, small_cfg());
    Var b(random_tensor(rng, {1, 3, 48, 64}, 0, 1));
    Var v(random_tensor(rng, {1, 4, 48, 64}, -1, 1));
    DispNetDiagnostics diag;
    net.forward(b, v, &diag);
    REQUIRE(diag.residuals.size() == 3);

    auto up = [](const Tensor& t) { return kernels::upsample2_bilinear_forward(t); };
    Tensor acc = diag.initial;
    for (const Tensor& r : diag.residuals) {
        Tensor u = up(acc);
        for (int64_t i = 0; i < u.numel(); ++i) u[i] = 2 * u[i] + r[i];
        acc = std::move(u);
    }
    REQUIRE(acc.same_shape(diag.pre_clamp));
    for (int64_t i = 0; i < acc.numel(); ++i)
        CHECK(std::fabs(acc[i] - diag.pre_clamp[i]) <= 1e-6);
}

TEST_CASE("gradient reaches essentially every parameter tensor") {
    Rng rng(24);
    DispNetConfig cfg = small_cfg();
    cfg.zero_init_heads = false;  // random heads so gradients can pass through
    DispNet net(rng, cfg);
    ParamMap pm;
    net.collect(pm, "dispnet");
    Var b(random_tensor(rng, {1, 3, 32, 32}, 0, 1));
    Var v(random_tensor(rng, {1, 4, 32, 32}, -1, 1));
    Var loss = mean_all(square(net.forward(b, v)));
    pm.zero_grad();
    loss.backward();
    int nonzero = 0, total = 0;
    for (auto& [name, var] : pm.params) {
        ++total;
        if (tensor_max_abs(var.grad()) > 0) ++nonzero;
    }
    CHECK(total == 80);  // 4 scales x 10 layers x (w, b)
    CHECK(static_cast<real>(nonzero) >= 0.99 * total);
}

TEST_CASE("permuting the batch permutes the outputs identically") {
    Rng rng(25);
    DispNet net(rng, small_cfg());
    Tensor b = random_tensor(rng, {3, 3, 32, 32}, 0, 1);
    Tensor v = random_tensor(rng, {3, 4, 32, 32}, -1, 1);
    Var out = net.forward(Var(b), Var(v));

    // reversed batch
    auto reverse_batch = [](const Tensor& t) {
        Tensor r(t.shape());
        const int64_t per = t.numel() / t.dim(0);
        for (int n = 0; n < t.dim(0); ++n)
            std::copy(t.data() + n * per, t.data() + (n + 1) * per,
                      r.data() + (t.dim(0) - 1 - n) * per);
        return r;
    };
    Var out_rev = net.forward(Var(reverse_batch(b)), Var(reverse_batch(v)));
    Tensor expect = reverse_batch(out.val());
    for (int64_t i = 0; i < expect.numel(); ++i) CHECK(out_rev.val()[i] == expect[i]);
}

TEST_CASE("rejects indivisible dims and modality mismatch") {
    Rng rng(26);
    DispNet net(rng, small_cfg());
    CHECK_THROWS(net.forward(Var(random_tensor(rng, {1, 3, 36, 36})),
                             Var(random_tensor(rng, {1, 4, 36, 36}))));
    CHECK_THROWS(net.forward(Var(random_tensor(rng, {1, 3, 32, 32})),
                             Var(random_tensor(rng, {1, 4, 64, 64}))));
    DispNetConfig bad = small_cfg();
    bad.pa_kernels = {1, 3, 7};
    CHECK_THROWS(DispNet(rng, bad));
}

TEST_CASE("single-sample estimate wrapper") {
    Rng rng(27);
    DispNet net(rng, small_cfg());
    geometry::ImageTensor img;
    img.role = geometry::ImageRole::intensity;
    img.data = random_tensor(rng, {3, 32, 32}, 0, 1);
    events::VoxelGrid vg;
    vg.bins = 4;
    vg.data = random_tensor(rng, {4, 32, 32}, -1, 1);
    auto [d, diag] = net.estimate(img, vg);
    CHECK(d.height() == 32);
    CHECK(d.width() == 32);
    CHECK(diag.per_scale.size() == 4);
}
