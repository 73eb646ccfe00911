#include "sted/dispnet.hpp"

#include <stdexcept>

namespace sted::dispnet {

namespace {
constexpr int kFactors[4] = {8, 4, 2, 1};  // coarse to fine
}

void DispNetConfig::validate() const {
    for (int w : widths)
        if (w < 1) throw std::invalid_argument("DispNetConfig: bad width");
    if (pa_kernels != std::array<int, 3>{1, 3, 5})
        throw std::invalid_argument("DispNetConfig: pa kernels must be (1,3,5)");
    if (max_disparity <= 0) throw std::invalid_argument("DispNetConfig: bad max_disparity");
    if (image_channels < 1 || voxel_bins < 1)
        throw std::invalid_argument("DispNetConfig: bad channel counts");
}

DispNet::DispNet(Rng& rng, const DispNetConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    scales_.resize(4);
    for (int s = 0; s < 4; ++s) {
        const int r = kFactors[s];
        const int w = cfg_.widths[static_cast<size_t>(3 - s)];  // widths listed fine->coarse
        Scale& sc = scales_[static_cast<size_t>(s)];
        sc.enc_b1 = Conv2d(rng, cfg_.image_channels * r * r, w, 3);
        sc.enc_b2 = Conv2d(rng, w, w, 3);
        sc.enc_e1 = Conv2d(rng, cfg_.voxel_bins * r * r, w, 3);
        sc.enc_e2 = Conv2d(rng, w, w, 3);
        sc.pa1 = Conv2d(rng, 2 * w, w, 1);
        sc.pa3 = Conv2d(rng, 2 * w, w, 3);
        sc.pa5 = Conv2d(rng, 2 * w, w, 5);
        const int dec_in = s == 0 ? w : w + cfg_.widths[static_cast<size_t>(3 - (s - 1))];
        sc.dec1 = Conv2d(rng, dec_in, w, 3);
        sc.dec2 = Conv2d(rng, w, w, 3);
        sc.head = Conv2d(rng, w, 1, 3, cfg_.zero_init_heads);
        if (cfg_.zero_init_heads && s == 0) sc.head.b.val().fill(cfg_.head_bias_init);
    }
}

void DispNet::collect(ParamMap& pm, const std::string& prefix) const {
    for (int s = 0; s < 4; ++s) {
        const Scale& sc = scales_[static_cast<size_t>(s)];
        const std::string p = prefix + ".s" + std::to_string(s);
        sc.enc_b1.collect(pm, p + ".enc_b1");
        sc.enc_b2.collect(pm, p + ".enc_b2");
        sc.enc_e1.collect(pm, p + ".enc_e1");
        sc.enc_e2.collect(pm, p + ".enc_e2");
        sc.pa1.collect(pm, p + ".pa1");
        sc.pa3.collect(pm, p + ".pa3");
        sc.pa5.collect(pm, p + ".pa5");
        sc.dec1.collect(pm, p + ".dec1");
        sc.dec2.collect(pm, p + ".dec2");
        sc.head.collect(pm, p + ".head");
    }
}

Var DispNet::forward(const Var& blurry, const Var& voxel, DispNetDiagnostics* diag) const {
    if (scales_.empty()) throw std::logic_error("DispNet: uninitialized");
    const Tensor& bv = blurry.val();
    const Tensor& vv = voxel.val();
    if (bv.ndim() != 4 || vv.ndim() != 4) throw std::invalid_argument("DispNet: expects NCHW");
    if (bv.dim(2) != vv.dim(2) || bv.dim(3) != vv.dim(3) || bv.dim(0) != vv.dim(0))
        throw std::invalid_argument("DispNet: modality dim mismatch");
    if (bv.dim(2) % 8 != 0 || bv.dim(3) % 8 != 0)
        throw std::invalid_argument("DispNet: H and W must be divisible by 8");
    if (bv.dim(1) != cfg_.image_channels || vv.dim(1) != cfg_.voxel_bins)
        throw std::invalid_argument("DispNet: channel count mismatch with config");

    // fused pyramid features, coarse to fine
    std::vector<Var> fused(4);
    for (int s = 0; s < 4; ++s) {
        const Scale& sc = scales_[static_cast<size_t>(s)];
        const int r = kFactors[s];
        Var b = r == 1 ? blurry : pixel_unshuffle(blurry, r);
        Var e = r == 1 ? voxel : pixel_unshuffle(voxel, r);
        Var fb = leaky_relu(sc.enc_b2(leaky_relu(sc.enc_b1(b))));
        Var fe = leaky_relu(sc.enc_e2(leaky_relu(sc.enc_e1(e))));
        Var cat = concat_ch({fb, fe});
        Var gate = sigmoid(add(add(sc.pa1(cat), sc.pa3(cat)), sc.pa5(cat)));
        fused[static_cast<size_t>(s)] = add(mul(gate, fb), mul(rsub_scalar(1, gate), fe));
    }

    Var dec_feat, disp;
    for (int s = 0; s < 4; ++s) {
        const Scale& sc = scales_[static_cast<size_t>(s)];
        Var din = s == 0 ? fused[0]
                         : concat_ch({upsample2_bilinear(dec_feat), fused[static_cast<size_t>(s)]});
        dec_feat = leaky_relu(sc.dec2(leaky_relu(sc.dec1(din))));
        Var head = sc.head(dec_feat);
        if (s == 0) {
            disp = head;
            if (diag) diag->initial = disp.val();
        } else {
            // disparity is in pixels of the current scale: upsample and double
            disp = add(scale(upsample2_bilinear(disp), 2), head);
            if (diag) diag->residuals.push_back(head.val());
        }
        if (diag) diag->per_scale.push_back(disp.val());
    }
    if (diag) diag->pre_clamp = disp.val();
    return cfg_.clamp_leak > 0 ? clamp_leaky(disp, 0, cfg_.max_disparity, cfg_.clamp_leak)
                               : clamp(disp, 0, cfg_.max_disparity);
}

std::pair<geometry::DisparityMap, DispNetDiagnostics> DispNet::estimate(
    const geometry::ImageTensor& blurry, const events::VoxelGrid& voxel) const {
    const int H = blurry.height(), W = blurry.width();
    Tensor b({1, blurry.channels(), H, W});
    std::copy(blurry.data.data(), blurry.data.data() + blurry.data.numel(), b.data());
    Tensor v({1, voxel.bins, H, W});
    if (voxel.data.dim(1) != H || voxel.data.dim(2) != W)
        throw std::invalid_argument("DispNet: voxel/image dim mismatch");
    std::copy(voxel.data.data(), voxel.data.data() + voxel.data.numel(), v.data());
    DispNetDiagnostics diag;
    Var out = forward(Var(std::move(b)), Var(std::move(v)), &diag);
    geometry::DisparityMap d;
    d.data = Tensor({H, W});
    std::copy(out.val().data(), out.val().data() + out.val().numel(), d.data.data());
    return {std::move(d), std::move(diag)};
}

}  // namespace sted::dispnet
