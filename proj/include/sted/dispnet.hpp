#pragma once

#include <array>
#include <vector>

#include "sted/events.hpp"
#include "sted/geometry.hpp"
#include "sted/nn.hpp"

namespace sted::dispnet {

// Coarse cross-modal disparity estimation. Two encoder branches (image and
// event voxel) feed a four-level pyramid built with pixel unshuffle
// (factors 8, 4, 2, 1). Pyramid-attention blocks fuse the branches at each
// level; a decoder predicts an initial map at 1/8 scale and residual
// corrections at the finer scales. Disparity values are expressed in pixels
// of the current scale, so each upsampling doubles them.
struct DispNetConfig {
    std::array<int, 4> widths = {32, 48, 64, 96};  // fine to coarse
    std::array<int, 3> pa_kernels = {1, 3, 5};
    real max_disparity = 48.0;
    int image_channels = 3;
    int voxel_bins = 6;
    // backward leak of the output clamp: saturated pixels receive
    // leak*gradient so they can re-enter the valid range (0 = hard clamp)
    real clamp_leak = 0.0;
    // zero-init the per-scale heads: the estimate starts flat, inside the
    // clamp's active region (see head_bias_init)
    bool zero_init_heads = true;
    // bias of the coarsest head under zero init; the full-scale estimate
    // starts at 8x this value because each upsampling doubles disparities
    real head_bias_init = 0.25;

    void validate() const;
};

struct DispNetDiagnostics {
    Tensor initial;                  // 1/8-scale map
    std::vector<Tensor> residuals;   // residual at 1/4, 1/2, 1/1
    std::vector<Tensor> per_scale;   // accumulated map per scale
    Tensor pre_clamp;                // full-scale map before clamping
};

class DispNet {
public:
    DispNet() = default;
    DispNet(Rng& rng, const DispNetConfig& cfg);

    // blurry [N,Cimg,H,W], voxel [N,bins,H,W]; H, W divisible by 8.
    // Returns full-scale disparity [N,1,H,W] clamped to [0, max_disparity].
    Var forward(const Var& blurry, const Var& voxel, DispNetDiagnostics* diag = nullptr) const;

    // single-sample convenience around forward()
    std::pair<geometry::DisparityMap, DispNetDiagnostics> estimate(
        const geometry::ImageTensor& blurry, const events::VoxelGrid& voxel) const;

    void collect(ParamMap& pm, const std::string& prefix = "dispnet") const;
    const DispNetConfig& config() const { return cfg_; }

private:
    DispNetConfig cfg_;
    // scale index 0 = coarsest (1/8) .. 3 = full
    struct Scale {
        Conv2d enc_b1, enc_b2;  // blur branch
        Conv2d enc_e1, enc_e2;  // event branch
        Conv2d pa1, pa3, pa5;   // pyramid attention
        Conv2d dec1, dec2;
        Conv2d head;
    };
    std::vector<Scale> scales_;
};

}  // namespace sted::dispnet
