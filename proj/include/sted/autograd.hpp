#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sted/tensor.hpp"

namespace sted {

// Reverse-mode autodiff over Tensor. A Var is a cheap handle to a graph
// node; ops build the graph eagerly and backward() walks it in reverse
// topological order. Single logical stream per training step: no locking.

struct Node {
    Tensor value;
    Tensor grad;                 // lazily allocated, same shape as value
    bool requires_grad = false;  // leaf parameter flag
    bool needs_grad = false;     // true if self or any ancestor requires grad
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;  // scatter this->grad into parents
    std::string name;

    void ensure_grad() {
        if (grad.numel() == 0) grad = Tensor(value.shape());
    }
};

class Var {
public:
    Var() = default;
    explicit Var(Tensor v, bool requires_grad = false, std::string name = {});

    bool defined() const { return static_cast<bool>(n_); }
    const Tensor& val() const { return n_->value; }
    Tensor& val() { return n_->value; }
    const Tensor& grad() const { return n_->grad; }
    Tensor& grad() {
        n_->ensure_grad();
        return n_->grad;
    }
    bool needs_grad() const { return n_ && n_->needs_grad; }
    const std::string& name() const { return n_->name; }
    const std::shared_ptr<Node>& node() const { return n_; }

    // Root must be scalar (numel == 1); seeds d(root)/d(root) = 1.
    void backward() const;

    void zero_grad() {
        if (n_ && n_->grad.numel() > 0) n_->grad.fill(0);
    }

private:
    std::shared_ptr<Node> n_;
};

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop);

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, real s);
Var add_scalar(const Var& a, real s);
Var rsub_scalar(real s, const Var& a);  // s - a
Var leaky_relu(const Var& a, real slope = 0.1);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var tanh_v(const Var& a);
Var clamp(const Var& a, real lo, real hi);  // pass-through gradient on [lo, hi]
// forward identical to clamp; backward passes the gradient unchanged, so
// saturated units keep receiving pressure instead of dying
Var clamp_straight_through(const Var& a, real lo, real hi);
// forward clamp; backward passes leak*grad outside [lo, hi] so saturated
// units can recover without the unbounded pressure of straight-through
Var clamp_leaky(const Var& a, real lo, real hi, real leak);
Var abs(const Var& a);
Var square(const Var& a);

// ---- reductions ----
Var mean_all(const Var& a);
Var sum_all(const Var& a);

// ---- shape / channel ops (NCHW) ----
Var concat_ch(const std::vector<Var>& xs);
Var slice_ch(const Var& x, int c0, int c1);  // channels [c0, c1)
Var pixel_unshuffle(const Var& x, int r);
Var pixel_shuffle(const Var& x, int r);

// ---- conv / pool / resampling ----
// stride 1, zero padding k/2 (odd k). x:[N,Cin,H,W] w:[Cout,Cin,k,k] b:[Cout]
Var conv2d(const Var& x, const Var& w, const Var& b);
Var max_pool2(const Var& x);            // 2x2, stride 2
Var upsample2_bilinear(const Var& x);   // align_corners=false

// Horizontal backward warp: out(n,c,y,x) = src(n,c,y,x - d(n,g,y,x)) with
// bilinear interpolation along x; taps outside [0, W-1] contribute zero.
// disp has G channels, G must divide C; channel group l uses field l.
Var warp_horizontal(const Var& src, const Var& disp);

// Anisotropic total variation: mean over (|dx| + |dy|) forward differences,
// normalized by H*W per map and averaged over leading dims.
Var tv_loss(const Var& d);

// ---- plain-tensor kernels shared with the non-differentiable paths ----
namespace kernels {
Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor warp_horizontal_forward(const Tensor& src, const Tensor& disp);
Tensor pixel_unshuffle_forward(const Tensor& x, int r);
Tensor pixel_shuffle_forward(const Tensor& x, int r);
Tensor upsample2_bilinear_forward(const Tensor& x);
}  // namespace kernels

}  // namespace sted
