#include "sted/dblrnet.hpp"

#include <cmath>
#include <stdexcept>

namespace sted::dblrnet {

void DblrNetConfig::validate() const {
    if (num_ddfe < 1) throw std::invalid_argument("DblrNetConfig: N must be >= 1");
    if (out_frames < 1) throw std::invalid_argument("DblrNetConfig: M must be >= 1");
    if (warp_groups < 1 || feature_channels % warp_groups != 0)
        throw std::invalid_argument("DblrNetConfig: C must be divisible by L");
    if (out_channels != 1 && out_channels != 3)
        throw std::invalid_argument("DblrNetConfig: out_channels must be 1 or 3");
    if (voxel_bins < 1 || rdb_growth < 1 || rdb_layers < 1)
        throw std::invalid_argument("DblrNetConfig: bad sub-block sizes");
}

// ---------------------------------------------------------------------------
// RDB
// ---------------------------------------------------------------------------

Rdb::Rdb(Rng& rng, int channels, int growth, int layers) {
    int cin = channels;
    for (int i = 0; i < layers; ++i) {
        dense.emplace_back(rng, cin, growth, 3);
        cin += growth;
    }
    fuse = Conv2d(rng, cin, channels, 1);
}

Var Rdb::operator()(const Var& x) const {
    std::vector<Var> feats{x};
    for (const Conv2d& c : dense) {
        Var in = feats.size() == 1 ? feats[0] : concat_ch(feats);
        feats.push_back(leaky_relu(c(in)));
    }
    return add(x, fuse(concat_ch(feats)));
}

void Rdb::collect(ParamMap& pm, const std::string& prefix) const {
    for (size_t i = 0; i < dense.size(); ++i)
        dense[i].collect(pm, prefix + ".d" + std::to_string(i));
    fuse.collect(pm, prefix + ".fuse");
}

// ---------------------------------------------------------------------------
// AFF
// ---------------------------------------------------------------------------

Aff::Aff(Rng& rng, int channels) {
    gate = Conv2d(rng, 2 * channels, channels, 3);
    proj = Conv2d(rng, channels, channels, 1);
}

Var Aff::operator()(const Var& f_self, const Var& w_other, bool use_gate) const {
    if (!f_self.val().same_shape(w_other.val()))
        throw std::invalid_argument("Aff: shape mismatch");
    Var fused;
    if (use_gate) {
        Var a = sigmoid(gate(concat_ch({f_self, w_other})));
        fused = add(mul(a, f_self), mul(rsub_scalar(1, a), w_other));
    } else {
        fused = scale(add(f_self, w_other), real(0.5));
    }
    return add(f_self, proj(fused));
}

void Aff::collect(ParamMap& pm, const std::string& prefix) const {
    gate.collect(pm, prefix + ".gate");
    proj.collect(pm, prefix + ".proj");
}

// ---------------------------------------------------------------------------
// SFE
// ---------------------------------------------------------------------------

Var DblrNet::Sfe::run(const Var& x) const {
    Var h = leaky_relu(c1(x));
    h = leaky_relu(proj(pixel_unshuffle(h, 2)));
    return leaky_relu(c2(h));
}

void DblrNet::Sfe::collect(ParamMap& pm, const std::string& prefix) const {
    c1.collect(pm, prefix + ".c1");
    proj.collect(pm, prefix + ".proj");
    c2.collect(pm, prefix + ".c2");
}

DblrNet::Sfe DblrNet::make_sfe(Rng& rng, int in_ch) const {
    Sfe s;
    const int C = cfg_.feature_channels;
    s.c1 = Conv2d(rng, in_ch, C, 3);
    s.proj = Conv2d(rng, 4 * C, C, 1);
    s.c2 = Conv2d(rng, C, C, 3);
    return s;
}

// ---------------------------------------------------------------------------
// DblrNet
// ---------------------------------------------------------------------------

DblrNet::DblrNet(Rng& rng, const DblrNetConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const int C = cfg_.feature_channels;
    const int L = cfg_.warp_groups;
    if (cfg_.dual_path) {
        sfe_b_ = make_sfe(rng, cfg_.out_channels);
        sfe_e_ = make_sfe(rng, cfg_.voxel_bins);
    } else {
        sfe_cat_ = make_sfe(rng, cfg_.out_channels + cfg_.voxel_bins);
    }
    for (int i = 0; i < cfg_.num_ddfe; ++i) {
        rdb_b_.emplace_back(rng, C, cfg_.rdb_growth, cfg_.rdb_layers);
        if (cfg_.dual_path) rdb_e_.emplace_back(rng, C, cfg_.rdb_growth, cfg_.rdb_layers);
    }
    if (cfg_.dual_path) {
        bde1_ = Conv2d(rng, 2 * C, C, 3);
        bde2_ = Conv2d(rng, C, C, 3);
        bde3_ = Conv2d(rng, C, 2 * L, 3, cfg_.zero_init_bde);
        aff_b_ = Aff(rng, C);
        aff_e_ = Aff(rng, C);
    }
    gff_fuse_ = Conv2d(rng, (cfg_.num_ddfe + 1) * C, C, 1);
    gff_c1_ = Conv2d(rng, C, C, 3);
    gff_c2_ = Conv2d(rng, C, C, 3);
    // small-scale init keeps the initial residual correction moderate
    gff_out_ = Conv2d(rng, C, cfg_.out_frames * cfg_.out_channels * 4, 3, false, 0.3);
}

void DblrNet::collect(ParamMap& pm, const std::string& prefix) const {
    if (cfg_.dual_path) {
        sfe_b_.collect(pm, prefix + ".sfe_b");
        sfe_e_.collect(pm, prefix + ".sfe_e");
    } else {
        sfe_cat_.collect(pm, prefix + ".sfe_cat");
    }
    for (int i = 0; i < cfg_.num_ddfe; ++i) {
        rdb_b_[static_cast<size_t>(i)].collect(pm, prefix + ".rdb_b" + std::to_string(i));
        if (cfg_.dual_path)
            rdb_e_[static_cast<size_t>(i)].collect(pm, prefix + ".rdb_e" + std::to_string(i));
    }
    if (cfg_.dual_path) {
        bde1_.collect(pm, prefix + ".bde1");
        bde2_.collect(pm, prefix + ".bde2");
        bde3_.collect(pm, prefix + ".bde3");
        aff_b_.collect(pm, prefix + ".aff_b");
        aff_e_.collect(pm, prefix + ".aff_e");
    }
    gff_fuse_.collect(pm, prefix + ".gff_fuse");
    gff_c1_.collect(pm, prefix + ".gff_c1");
    gff_c2_.collect(pm, prefix + ".gff_c2");
    gff_out_.collect(pm, prefix + ".gff_out");
}

Var DblrNet::sfe_blur(const Var& x) const { return (cfg_.dual_path ? sfe_b_ : sfe_cat_).run(x); }
Var DblrNet::sfe_event(const Var& x) const { return sfe_e_.run(x); }

Var DblrNet::bde_fields(const Var& fb, const Var& fe) const {
    Var h = leaky_relu(bde1_(concat_ch({fb, fe})));
    h = leaky_relu(bde2_(h));
    Var raw = bde3_(h);
    if (cfg_.bde_range <= 0) return raw;
    return scale(tanh_v(scale(raw, 1 / cfg_.bde_range)), cfg_.bde_range);
}

Var DblrNet::rdb_blur(int stage, const Var& x) const {
    return rdb_b_[static_cast<size_t>(stage)](x);
}
Var DblrNet::rdb_event(int stage, const Var& x) const {
    return rdb_e_[static_cast<size_t>(stage)](x);
}

ParamMap DblrNet::bde_params() const {
    ParamMap pm;
    bde1_.collect(pm, "bde1");
    bde2_.collect(pm, "bde2");
    bde3_.collect(pm, "bde3");
    return pm;
}

DblrNet::StageOut DblrNet::ddfe(int stage, const Var& f_blur, const Var& f_event) const {
    const int L = cfg_.warp_groups;
    StageOut out;
    Var fb = rdb_b_[static_cast<size_t>(stage)](f_blur);
    Var fe = rdb_e_[static_cast<size_t>(stage)](f_event);
    Var wb = fb, we = fe;
    if (cfg_.use_bde) {
        out.fields = bde_fields(fb, fe);
        Var d_b2e = slice_ch(out.fields, 0, L);
        Var d_e2b = slice_ch(out.fields, L, 2 * L);
        wb = warp_horizontal(fb, d_e2b);
        we = warp_horizontal(fe, d_b2e);
    }
    // each path fuses its own features with the warp of the other path
    out.f_blur = aff_b_(fb, we, cfg_.use_aff);
    out.f_event = aff_e_(fe, wb, cfg_.use_aff);
    return out;
}

std::vector<Var> DblrNet::gff(const std::vector<Var>& taps) const {
    const int expect = (cfg_.num_ddfe + 1) * cfg_.feature_channels;
    int got = 0;
    for (const Var& t : taps) got += t.val().dim(1);
    if (got != expect) throw std::invalid_argument("gff: channel count mismatch");
    Var fused = leaky_relu(gff_fuse_(taps.size() == 1 ? taps[0] : concat_ch(taps)));
    fused = leaky_relu(gff_c1_(fused));
    fused = leaky_relu(gff_c2_(fused));
    Var out = pixel_shuffle(gff_out_(fused), 2);  // [N, M*out_ch, H, W]
    std::vector<Var> frames;
    frames.reserve(static_cast<size_t>(cfg_.out_frames));
    for (int m = 0; m < cfg_.out_frames; ++m)
        frames.push_back(slice_ch(out, m * cfg_.out_channels, (m + 1) * cfg_.out_channels));
    return frames;
}

std::vector<Var> DblrNet::forward(const Var& blurry, const Var& voxel, DblrNetDiagnostics* diag,
                                  std::vector<Var>* field_taps) const {
    const Tensor& bv = blurry.val();
    const Tensor& vv = voxel.val();
    if (bv.ndim() != 4 || vv.ndim() != 4) throw std::invalid_argument("DblrNet: expects NCHW");
    if (bv.dim(2) % 2 != 0 || bv.dim(3) % 2 != 0)
        throw std::invalid_argument("DblrNet: H and W must be even");
    if (bv.dim(0) != vv.dim(0) || bv.dim(2) != vv.dim(2) || bv.dim(3) != vv.dim(3))
        throw std::invalid_argument("DblrNet: input dim mismatch");
    const int N = bv.dim(0);
    const int L = cfg_.warp_groups;
    const int h = bv.dim(2) / 2, w = bv.dim(3) / 2;

    std::vector<Var> gff_in;
    Var last_event;

    if (cfg_.dual_path) {
        Var fb = sfe_b_.run(blurry);
        Var fe = sfe_e_.run(voxel);
        for (int i = 0; i < cfg_.num_ddfe; ++i) {
            StageOut st = ddfe(i, fb, fe);
            fb = st.f_blur;
            fe = st.f_event;
            gff_in.push_back(fb);
            if (field_taps && st.fields.defined()) field_taps->push_back(st.fields);
            if (diag) {
                if (st.fields.defined()) {
                    diag->stage_fields.push_back(st.fields.val());
                    real acc = 0;
                    for (int64_t k = 0; k < st.fields.val().numel(); ++k)
                        acc += std::fabs(st.fields.val()[k]);
                    diag->stage_mean_abs_disparity.push_back(
                        acc / static_cast<real>(st.fields.val().numel()));
                } else {
                    diag->stage_fields.push_back(Tensor({N, 2 * L, h, w}));
                    diag->stage_mean_abs_disparity.push_back(0);
                }
            }
        }
        last_event = fe;
    } else {
        Var f = sfe_cat_.run(concat_ch({blurry, voxel}));
        last_event = f;  // shallow features stand in for the event-path tap
        for (int i = 0; i < cfg_.num_ddfe; ++i) {
            f = rdb_b_[static_cast<size_t>(i)](f);
            gff_in.push_back(f);
            if (diag) {
                diag->stage_fields.push_back(Tensor({N, 2 * L, h, w}));
                diag->stage_mean_abs_disparity.push_back(0);
            }
        }
    }

    gff_in.push_back(last_event);
    std::vector<Var> frames = gff(gff_in);
    if (cfg_.global_residual)
        for (Var& f : frames) f = add(f, blurry);
    return frames;
}

}  // namespace sted::dblrnet
