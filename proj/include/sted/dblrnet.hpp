#pragma once

#include <vector>

#include "sted/nn.hpp"

namespace sted::dblrnet {

// Fine alignment and deblurring network. Shallow feature extraction brings
// both inputs to C x H/2 x W/2; N cascaded dual-feature stages follow, each
// being RDB (per stage) -> bidirectional disparity head -> grouped horizontal
// warps -> attention fusion, with the disparity head and the fusion blocks
// shared across stages; a global fusion head reconstructs M output frames at
// full resolution via pixel shuffle.
struct DblrNetConfig {
    int feature_channels = 48;  // C, divisible by warp_groups
    int num_ddfe = 6;           // N
    int warp_groups = 6;        // L
    int out_frames = 7;         // M
    int out_channels = 3;       // image channels (1 or 3)
    int voxel_bins = 6;
    int rdb_growth = 16;
    int rdb_layers = 4;
    bool dual_path = true;  // false: single path over channel-concatenated inputs
    bool use_bde = true;
    bool use_aff = true;
    bool zero_init_bde = true;     // start from identity alignment
    bool global_residual = true;   // frames = blurry + predicted correction
    // bound on the per-stage fields, in feature pixels (H/2 scale); keeps the
    // stages to fine corrections so coarse parallax stays with the
    // disparity network. 0 disables the bound.
    real bde_range = 1.0;

    void validate() const;
};

struct DblrNetDiagnostics {
    // per stage: raw bidirectional fields [N, 2L, H/2, W/2]
    // (first L channels map blur->event, last L event->blur)
    std::vector<Tensor> stage_fields;
    std::vector<real> stage_mean_abs_disparity;
};

// Residual dense block: densely connected 3x3 convs with growth g, a 1x1
// local-fusion conv and an identity skip.
struct Rdb {
    std::vector<Conv2d> dense;
    Conv2d fuse;

    Rdb() = default;
    Rdb(Rng& rng, int channels, int growth, int layers);
    Var operator()(const Var& x) const;
    void collect(ParamMap& pm, const std::string& prefix) const;
};

// Attention fusion: gate = sigmoid(conv([self, other])), fused = gate*self +
// (1-gate)*other, output = self + 1x1 projection of fused. With the gate
// disabled the fusion degenerates to the plain average of the two inputs.
struct Aff {
    Conv2d gate;
    Conv2d proj;

    Aff() = default;
    Aff(Rng& rng, int channels);
    Var operator()(const Var& f_self, const Var& w_other, bool use_gate = true) const;
    void collect(ParamMap& pm, const std::string& prefix) const;
};

class DblrNet {
public:
    DblrNet() = default;
    DblrNet(Rng& rng, const DblrNetConfig& cfg);

    // blurry [N,out_channels,H,W], aligned voxel [N,bins,H,W]; H, W even.
    // `field_taps`, when given, receives the per-stage field Vars so callers
    // can attach regularizers to them.
    std::vector<Var> forward(const Var& blurry, const Var& voxel,
                             DblrNetDiagnostics* diag = nullptr,
                             std::vector<Var>* field_taps = nullptr) const;

    void collect(ParamMap& pm, const std::string& prefix = "dblrnet") const;
    const DblrNetConfig& config() const { return cfg_; }

    // individual blocks, callable on their own
    Var sfe_blur(const Var& x) const;
    Var sfe_event(const Var& x) const;
    Var bde_fields(const Var& fb, const Var& fe) const;  // [N,2L,h,w]
    const Aff& aff_blur() const { return aff_b_; }
    const Aff& aff_event() const { return aff_e_; }
    Var rdb_blur(int stage, const Var& x) const;
    Var rdb_event(int stage, const Var& x) const;
    ParamMap bde_params() const;

    struct StageOut {
        Var f_blur, f_event;
        Var fields;  // [N,2L,h,w]; undefined when the disparity head is off
    };
    // one dual-feature stage: RDB each path -> disparity head -> grouped
    // warps (blur warped by event->blur fields and vice versa) -> fusion
    StageOut ddfe(int stage, const Var& f_blur, const Var& f_event) const;

    // fusion head over the concatenated taps ((N+1)*C channels)
    std::vector<Var> gff(const std::vector<Var>& taps) const;

private:
    struct Sfe {
        Conv2d c1;    // full resolution
        Conv2d proj;  // after pixel_unshuffle(2)
        Conv2d c2;
        Var run(const Var& x) const;
        void collect(ParamMap& pm, const std::string& prefix) const;
    };
    Sfe make_sfe(Rng& rng, int in_ch) const;

    DblrNetConfig cfg_;
    Sfe sfe_b_, sfe_e_;   // dual path
    Sfe sfe_cat_;         // single path
    std::vector<Rdb> rdb_b_, rdb_e_;  // per-stage
    Conv2d bde1_, bde2_, bde3_;       // shared across stages
    Aff aff_b_, aff_e_;               // shared across stages
    Conv2d gff_fuse_, gff_c1_, gff_c2_, gff_out_;
};

}  // namespace sted::dblrnet
