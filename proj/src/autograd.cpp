#include "sted/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace sted {

Var::Var(Tensor v, bool requires_grad, std::string name) {
    n_ = std::make_shared<Node>();
    n_->value = std::move(v);
    n_->requires_grad = requires_grad;
    n_->needs_grad = requires_grad;
    n_->name = std::move(name);
}

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
    Var out(std::move(value));
    bool needs = false;
    for (const Var& p : parents)
        if (p.needs_grad()) needs = true;
    if (needs) {
        out.node()->needs_grad = true;
        out.node()->parents.reserve(parents.size());
        for (const Var& p : parents) out.node()->parents.push_back(p.node());
        out.node()->backprop = std::move(backprop);
    }
    return out;
}

void Var::backward() const {
    if (!n_) throw std::runtime_error("backward() on undefined Var");
    if (n_->value.numel() != 1) throw std::runtime_error("backward() root must be scalar");
    if (!n_->needs_grad) return;

    // iterative post-order DFS for reverse topological order
    std::vector<Node*> order;
    std::unordered_set<Node*> done;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(n_.get(), 0);
    done.insert(n_.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->needs_grad && !done.count(p)) {
                done.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    n_->ensure_grad();
    n_->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backprop && node->grad.numel() > 0) node->backprop(*node);
    }
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

static void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a.val().same_shape(b.val()))
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor y(a.val().shape());
    const int64_t n = y.numel();
    for (int64_t i = 0; i < n; ++i) y[i] = a.val()[i] + b.val()[i];
    return make_op(std::move(y), {a, b}, [n](Node& self) {
        for (int pi = 0; pi < 2; ++pi) {
            Node* p = self.parents[pi].get();
            if (!p->needs_grad) continue;
            p->ensure_grad();
            for (int64_t i = 0; i < n; ++i) p->grad[i] += self.grad[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor y(a.val().shape());
    const int64_t n = y.numel();
    for (int64_t i = 0; i < n; ++i) y[i] = a.val()[i] - b.val()[i];
    return make_op(std::move(y), {a, b}, [n](Node& self) {
        Node* pa = self.parents[0].get();
        Node* pb = self.parents[1].get();
        if (pa->needs_grad) {
            pa->ensure_grad();
            for (int64_t i = 0; i < n; ++i) pa->grad[i] += self.grad[i];
        }
        if (pb->needs_grad) {
            pb->ensure_grad();
            for (int64_t i = 0; i < n; ++i) pb->grad[i] -= self.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor y(a.val().shape());
    const int64_t n = y.numel();
    for (int64_t i = 0; i < n; ++i) y[i] = a.val()[i] * b.val()[i];
    return make_op(std::move(y), {a, b}, [n](Node& self) {
        Node* pa = self.parents[0].get();
        Node* pb = self.parents[1].get();
        if (pa->needs_grad) {
            pa->ensure_grad();
            for (int64_t i = 0; i < n; ++i) pa->grad[i] += self.grad[i] * pb->value[i];
        }
        if (pb->needs_grad) {
            pb->ensure_grad();
            for (int64_t i = 0; i < n; ++i) pb->grad[i] += self.grad[i] * pa->value[i];
        }
    });
}

Var scale(const Var& a, real s) {
    Tensor y(a.val().shape());
    const int64_t n = y.numel();
    for (int64_t i = 0; i < n; ++i) y[i] = a.val()[i] * s;
    return make_op(std::move(y), {a}, [n, s](Node& self) {
        Node* p = self.parents[0].get();
        p->ensure_grad();
        for (int64_t i = 0; i < n; ++i) p->grad[i] += self.grad[i] * s;
    });
}

Var add_scalar(const Var& a, real s) {
    Tensor y(a.val().shape());
    const int64_t n = y.numel();
    for (int64_t i = 0; i < n; ++i) y[i] = a.val()[i] + s;
    return make_op(std::move(y), {a}, [n](Node& self) {
        Node* p = self.parents[0].get();
        p->ensure_grad();
        for (int64_t i = 0; i < n; ++i) p->grad[i] += self.grad[i];
    });
}

Var rsub_scalar(real s, const Var& a) {
    Tensor y(a.val().shape());
    const int64_t n = y.numel();
    for (int64_t i = 0; i < n; ++i) y[i] = s - a.val()[i];
    return make_op(std::move(y), {a}, [n](Node& self) {
        Node* p = self.parents[0].get();
        p->ensure_grad();
        for (int64_t i = 0; i < n; ++i) p->grad[i] -= self.grad[i];
    });
}

Var leaky_relu(const Var& a, real slope) {
    Tensor y(a.val().shape());
    const int64_t n = y.numel();
    for (int64_t i = 0; i < n; ++i) {
        real v = a.val()[i];
        y[i] = v > 0 ? v : slope * v;
    }
    return make_op(std::move(y), {a}, [n, slope](Node& self) {
        Node* p = self.parents[0].get();
        p->ensure_grad();
        for (int64_t i = 0; i < n; ++i)
            p->grad[i] += self.grad[i] * (p->value[i] > 0 ? real(1) : slope);
    });
}

Var relu(const Var& a) { return leaky_relu(a, 0.0); }

Var sigmoid(const Var& a) {
    Tensor y(a.val().shape());
    const int64_t n = y.numel();
    for (int64_t i = 0; i < n; ++i) y[i] = real(1) / (real(1) + std::exp(-a.val()[i]));
    return make_op(std::move(y), {a}, [n](Node& self) {
        Node* p = self.parents[0].get();
        p->ensure_grad();
        for (int64_t i = 0; i < n; ++i) {
            real s = self.value[i];
            p->grad[i] += self.grad[i] * s * (real(1) - s);
        }
    });
}

Var clamp(const Var& a, real lo, real hi) {
    Tensor y(a.val().shape());
    const int64_t n = y.numel();
    for (int64_t i = 0; i < n; ++i) y[i] = std::min(hi, std::max(lo, a.val()[i]));
    return make_op(std::move(y), {a}, [n, lo, hi](Node& self) {
        Node* p = self.parents[0].get();
        p->ensure_grad();
        for (int64_t i = 0; i < n; ++i) {
            real v = p->value[i];
            if (v >= lo && v <= hi) p->grad[i] += self.grad[i];
        }
    });
}

Var tanh_v(const Var& a) {
    Tensor y(a.val().shape());
    const int64_t n = y.numel();
    for (int64_t i = 0; i < n; ++i) y[i] = std::tanh(a.val()[i]);
    return make_op(std::move(y), {a}, [n](Node& self) {
        Node* p = self.parents[0].get();
        p->ensure_grad();
        for (int64_t i = 0; i < n; ++i) {
            real t = self.value[i];
            p->grad[i] += self.grad[i] * (1 - t * t);
        }
    });
}

Var clamp_leaky(const Var& a, real lo, real hi, real leak) {
    Tensor y(a.val().shape());
    const int64_t n = y.numel();
    for (int64_t i = 0; i < n; ++i) y[i] = std::min(hi, std::max(lo, a.val()[i]));
    return make_op(std::move(y), {a}, [n, lo, hi, leak](Node& self) {
        Node* p = self.parents[0].get();
        p->ensure_grad();
        for (int64_t i = 0; i < n; ++i) {
            real v = p->value[i];
            p->grad[i] += self.grad[i] * ((v >= lo && v <= hi) ? real(1) : leak);
        }
    });
}

Var clamp_straight_through(const Var& a, real lo, real hi) {
    Tensor y(a.val().shape());
    const int64_t n = y.numel();
    for (int64_t i = 0; i < n; ++i) y[i] = std::min(hi, std::max(lo, a.val()[i]));
    return make_op(std::move(y), {a}, [n](Node& self) {
        Node* p = self.parents[0].get();
        p->ensure_grad();
        for (int64_t i = 0; i < n; ++i) p->grad[i] += self.grad[i];
    });
}

Var abs(const Var& a) {
    Tensor y(a.val().shape());
    const int64_t n = y.numel();
    for (int64_t i = 0; i < n; ++i) y[i] = std::fabs(a.val()[i]);
    return make_op(std::move(y), {a}, [n](Node& self) {
        Node* p = self.parents[0].get();
        p->ensure_grad();
        for (int64_t i = 0; i < n; ++i) {
            real v = p->value[i];
            real s = v > 0 ? real(1) : (v < 0 ? real(-1) : real(0));
            p->grad[i] += self.grad[i] * s;
        }
    });
}

Var square(const Var& a) {
    Tensor y(a.val().shape());
    const int64_t n = y.numel();
    for (int64_t i = 0; i < n; ++i) y[i] = a.val()[i] * a.val()[i];
    return make_op(std::move(y), {a}, [n](Node& self) {
        Node* p = self.parents[0].get();
        p->ensure_grad();
        for (int64_t i = 0; i < n; ++i) p->grad[i] += self.grad[i] * 2 * p->value[i];
    });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Var mean_all(const Var& a) {
    const int64_t n = a.val().numel();
    Tensor y({1});
    real s = 0;
    for (int64_t i = 0; i < n; ++i) s += a.val()[i];
    y[0] = s / static_cast<real>(n);
    return make_op(std::move(y), {a}, [n](Node& self) {
        Node* p = self.parents[0].get();
        p->ensure_grad();
        real g = self.grad[0] / static_cast<real>(n);
        for (int64_t i = 0; i < n; ++i) p->grad[i] += g;
    });
}

Var sum_all(const Var& a) {
    const int64_t n = a.val().numel();
    Tensor y({1});
    real s = 0;
    for (int64_t i = 0; i < n; ++i) s += a.val()[i];
    y[0] = s;
    return make_op(std::move(y), {a}, [n](Node& self) {
        Node* p = self.parents[0].get();
        p->ensure_grad();
        real g = self.grad[0];
        for (int64_t i = 0; i < n; ++i) p->grad[i] += g;
    });
}

// ---------------------------------------------------------------------------
// channel ops
// ---------------------------------------------------------------------------

static void check_4d(const Var& x, const char* op) {
    if (x.val().ndim() != 4) throw std::invalid_argument(std::string(op) + ": expects NCHW");
}

Var concat_ch(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_ch: empty input");
    check_4d(xs[0], "concat_ch");
    const int N = xs[0].val().dim(0), H = xs[0].val().dim(2), W = xs[0].val().dim(3);
    int ctot = 0;
    for (const Var& x : xs) {
        check_4d(x, "concat_ch");
        if (x.val().dim(0) != N || x.val().dim(2) != H || x.val().dim(3) != W)
            throw std::invalid_argument("concat_ch: dim mismatch");
        ctot += x.val().dim(1);
    }
    Tensor y({N, ctot, H, W});
    const int64_t hw = static_cast<int64_t>(H) * W;
    std::vector<int> coff(xs.size());
    {
        int c0 = 0;
        for (size_t i = 0; i < xs.size(); ++i) {
            coff[i] = c0;
            const Tensor& xi = xs[i].val();
            const int ci = xi.dim(1);
            for (int nn = 0; nn < N; ++nn)
                std::copy(xi.data() + nn * ci * hw, xi.data() + (nn + 1) * ci * hw,
                          y.data() + (static_cast<int64_t>(nn) * ctot + c0) * hw);
            c0 += ci;
        }
    }
    return make_op(std::move(y), xs, [N, ctot, hw, coff](Node& self) {
        for (size_t i = 0; i < self.parents.size(); ++i) {
            Node* p = self.parents[i].get();
            if (!p->needs_grad) continue;
            p->ensure_grad();
            const int ci = p->value.dim(1);
            for (int nn = 0; nn < N; ++nn) {
                const real* g = self.grad.data() + (static_cast<int64_t>(nn) * ctot + coff[i]) * hw;
                real* pg = p->grad.data() + static_cast<int64_t>(nn) * ci * hw;
                for (int64_t j = 0; j < ci * hw; ++j) pg[j] += g[j];
            }
        }
    });
}

Var slice_ch(const Var& x, int c0, int c1) {
    check_4d(x, "slice_ch");
    const int N = x.val().dim(0), C = x.val().dim(1), H = x.val().dim(2), W = x.val().dim(3);
    if (c0 < 0 || c1 > C || c0 >= c1) throw std::invalid_argument("slice_ch: bad range");
    const int cs = c1 - c0;
    const int64_t hw = static_cast<int64_t>(H) * W;
    Tensor y({N, cs, H, W});
    for (int nn = 0; nn < N; ++nn)
        std::copy(x.val().data() + (static_cast<int64_t>(nn) * C + c0) * hw,
                  x.val().data() + (static_cast<int64_t>(nn) * C + c1) * hw,
                  y.data() + static_cast<int64_t>(nn) * cs * hw);
    return make_op(std::move(y), {x}, [N, C, c0, cs, hw](Node& self) {
        Node* p = self.parents[0].get();
        p->ensure_grad();
        for (int nn = 0; nn < N; ++nn) {
            const real* g = self.grad.data() + static_cast<int64_t>(nn) * cs * hw;
            real* pg = p->grad.data() + (static_cast<int64_t>(nn) * C + c0) * hw;
            for (int64_t j = 0; j < cs * hw; ++j) pg[j] += g[j];
        }
    });
}

// ---------------------------------------------------------------------------
// pixel shuffle / unshuffle
// ---------------------------------------------------------------------------

namespace kernels {

Tensor pixel_unshuffle_forward(const Tensor& x, int r) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (r < 1 || H % r != 0 || W % r != 0)
        throw std::invalid_argument("pixel_unshuffle: dims not divisible by r");
    const int Ho = H / r, Wo = W / r, Co = C * r * r;
    Tensor y({N, Co, Ho, Wo});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int dy = 0; dy < r; ++dy)
                for (int dx = 0; dx < r; ++dx) {
                    const int co = c * r * r + dy * r + dx;
                    for (int oy = 0; oy < Ho; ++oy) {
                        const real* src = x.data() +
                            ((static_cast<int64_t>(n) * C + c) * H + (oy * r + dy)) * W + dx;
                        real* dst = y.data() +
                            ((static_cast<int64_t>(n) * Co + co) * Ho + oy) * Wo;
                        for (int ox = 0; ox < Wo; ++ox) dst[ox] = src[static_cast<int64_t>(ox) * r];
                    }
                }
    return y;
}

Tensor pixel_shuffle_forward(const Tensor& x, int r) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (r < 1 || C % (r * r) != 0)
        throw std::invalid_argument("pixel_shuffle: channels not divisible by r^2");
    const int Co = C / (r * r), Ho = H * r, Wo = W * r;
    Tensor y({N, Co, Ho, Wo});
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Co; ++co)
            for (int dy = 0; dy < r; ++dy)
                for (int dx = 0; dx < r; ++dx) {
                    const int c = co * r * r + dy * r + dx;
                    for (int iy = 0; iy < H; ++iy) {
                        const real* src = x.data() +
                            ((static_cast<int64_t>(n) * C + c) * H + iy) * W;
                        real* dst = y.data() +
                            ((static_cast<int64_t>(n) * Co + co) * Ho + (iy * r + dy)) * Wo + dx;
                        for (int ix = 0; ix < W; ++ix) dst[static_cast<int64_t>(ix) * r] = src[ix];
                    }
                }
    return y;
}

}  // namespace kernels

Var pixel_unshuffle(const Var& x, int r) {
    check_4d(x, "pixel_unshuffle");
    Tensor y = kernels::pixel_unshuffle_forward(x.val(), r);
    return make_op(std::move(y), {x}, [r](Node& self) {
        Node* p = self.parents[0].get();
        p->ensure_grad();
        Tensor gx = kernels::pixel_shuffle_forward(self.grad, r);
        for (int64_t i = 0; i < gx.numel(); ++i) p->grad[i] += gx[i];
    });
}

Var pixel_shuffle(const Var& x, int r) {
    check_4d(x, "pixel_shuffle");
    Tensor y = kernels::pixel_shuffle_forward(x.val(), r);
    return make_op(std::move(y), {x}, [r](Node& self) {
        Node* p = self.parents[0].get();
        p->ensure_grad();
        Tensor gx = kernels::pixel_unshuffle_forward(self.grad, r);
        for (int64_t i = 0; i < gx.numel(); ++i) p->grad[i] += gx[i];
    });
}

// ---------------------------------------------------------------------------
// conv2d (stride 1, same padding) via im2col + small GEMM helpers
// ---------------------------------------------------------------------------

namespace {

// C[M,N] += A[M,K] * B[K,N]
void gemm_acc(const real* A, const real* B, real* C, int M, int K, int N) {
    for (int m = 0; m < M; ++m) {
        const real* arow = A + static_cast<int64_t>(m) * K;
        real* crow = C + static_cast<int64_t>(m) * N;
        for (int k = 0; k < K; ++k) {
            const real a = arow[k];
            if (a == 0) continue;
            const real* brow = B + static_cast<int64_t>(k) * N;
            for (int n = 0; n < N; ++n) crow[n] += a * brow[n];
        }
    }
}

// C[M,K2] += A[M,N] * B[K2,N]^T
void gemm_abt(const real* A, const real* B, real* C, int M, int N, int K2) {
    for (int m = 0; m < M; ++m) {
        const real* arow = A + static_cast<int64_t>(m) * N;
        real* crow = C + static_cast<int64_t>(m) * K2;
        for (int k = 0; k < K2; ++k) {
            const real* brow = B + static_cast<int64_t>(k) * N;
            real s = 0;
            for (int n = 0; n < N; ++n) s += arow[n] * brow[n];
            crow[k] += s;
        }
    }
}

// C[K,N] += A[M,K]^T * B[M,N]
void gemm_atb(const real* A, const real* B, real* C, int M, int K, int N) {
    for (int m = 0; m < M; ++m) {
        const real* arow = A + static_cast<int64_t>(m) * K;
        const real* brow = B + static_cast<int64_t>(m) * N;
        for (int k = 0; k < K; ++k) {
            const real a = arow[k];
            if (a == 0) continue;
            real* crow = C + static_cast<int64_t>(k) * N;
            for (int n = 0; n < N; ++n) crow[n] += a * brow[n];
        }
    }
}

// col is [C*k*k, H*W]; zero padding k/2
void im2col(const real* x, int C, int H, int W, int k, real* col) {
    const int pad = k / 2;
    const int64_t hw = static_cast<int64_t>(H) * W;
    int64_t row = 0;
    for (int c = 0; c < C; ++c)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx, ++row) {
                real* dst = col + row * hw;
                const int ox = kx - pad;
                for (int y = 0; y < H; ++y) {
                    const int iy = y + ky - pad;
                    real* drow = dst + static_cast<int64_t>(y) * W;
                    if (iy < 0 || iy >= H) {
                        std::fill(drow, drow + W, real(0));
                        continue;
                    }
                    const real* srow = x + (static_cast<int64_t>(c) * H + iy) * W;
                    const int x0 = std::max(0, -ox);
                    const int x1 = std::min(W, W - ox);
                    for (int xx = 0; xx < x0; ++xx) drow[xx] = 0;
                    for (int xx = x0; xx < x1; ++xx) drow[xx] = srow[xx + ox];
                    for (int xx = x1; xx < W; ++xx) drow[xx] = 0;
                }
            }
}

// transpose of im2col: accumulate col [C*k*k, H*W] back into x [C,H,W]
void col2im_acc(const real* col, int C, int H, int W, int k, real* x) {
    const int pad = k / 2;
    const int64_t hw = static_cast<int64_t>(H) * W;
    int64_t row = 0;
    for (int c = 0; c < C; ++c)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx, ++row) {
                const real* src = col + row * hw;
                const int ox = kx - pad;
                for (int y = 0; y < H; ++y) {
                    const int iy = y + ky - pad;
                    if (iy < 0 || iy >= H) continue;
                    const real* srow = src + static_cast<int64_t>(y) * W;
                    real* drow = x + (static_cast<int64_t>(c) * H + iy) * W;
                    const int x0 = std::max(0, -ox);
                    const int x1 = std::min(W, W - ox);
                    for (int xx = x0; xx < x1; ++xx) drow[xx + ox] += srow[xx];
                }
            }
}

void check_conv_args(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.ndim() != 4 || w.ndim() != 4 || b.ndim() != 1)
        throw std::invalid_argument("conv2d: bad ranks");
    if (w.dim(1) != x.dim(1)) throw std::invalid_argument("conv2d: channel mismatch");
    if (w.dim(2) != w.dim(3) || w.dim(2) % 2 == 0)
        throw std::invalid_argument("conv2d: kernel must be square and odd");
    if (b.dim(0) != w.dim(0)) throw std::invalid_argument("conv2d: bias size mismatch");
}

}  // namespace

namespace kernels {

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
    check_conv_args(x, w, b);
    const int N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Cout = w.dim(0), k = w.dim(2);
    const int64_t hw = static_cast<int64_t>(H) * W;
    const int K = Cin * k * k;
    Tensor y({N, Cout, H, W});
    std::vector<real> col(static_cast<size_t>(K) * hw);
    for (int n = 0; n < N; ++n) {
        im2col(x.data() + static_cast<int64_t>(n) * Cin * hw, Cin, H, W, k, col.data());
        real* yn = y.data() + static_cast<int64_t>(n) * Cout * hw;
        for (int co = 0; co < Cout; ++co)
            std::fill(yn + static_cast<int64_t>(co) * hw, yn + (static_cast<int64_t>(co) + 1) * hw,
                      b[co]);
        gemm_acc(w.data(), col.data(), yn, Cout, K, static_cast<int>(hw));
    }
    return y;
}

}  // namespace kernels

Var conv2d(const Var& x, const Var& w, const Var& b) {
    Tensor y = kernels::conv2d_forward(x.val(), w.val(), b.val());
    return make_op(std::move(y), {x, w, b}, [](Node& self) {
        Node* px = self.parents[0].get();
        Node* pw = self.parents[1].get();
        Node* pb = self.parents[2].get();
        const Tensor& xv = px->value;
        const Tensor& wv = pw->value;
        const int N = xv.dim(0), Cin = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
        const int Cout = wv.dim(0), k = wv.dim(2);
        const int64_t hw = static_cast<int64_t>(H) * W;
        const int K = Cin * k * k;

        if (pb->needs_grad) {
            pb->ensure_grad();
            for (int n = 0; n < N; ++n)
                for (int co = 0; co < Cout; ++co) {
                    const real* g = self.grad.data() + (static_cast<int64_t>(n) * Cout + co) * hw;
                    real s = 0;
                    for (int64_t i = 0; i < hw; ++i) s += g[i];
                    pb->grad[co] += s;
                }
        }

        const bool need_x = px->needs_grad;
        const bool need_w = pw->needs_grad;
        if (!need_x && !need_w) return;

        if (need_x) px->ensure_grad();
        if (need_w) pw->ensure_grad();
        std::vector<real> col(static_cast<size_t>(K) * hw);
        std::vector<real> colg;
        if (need_x) colg.resize(static_cast<size_t>(K) * hw);
        for (int n = 0; n < N; ++n) {
            const real* gy = self.grad.data() + static_cast<int64_t>(n) * Cout * hw;
            if (need_w) {
                im2col(xv.data() + static_cast<int64_t>(n) * Cin * hw, Cin, H, W, k, col.data());
                gemm_abt(gy, col.data(), pw->grad.data(), Cout, static_cast<int>(hw), K);
            }
            if (need_x) {
                std::fill(colg.begin(), colg.end(), real(0));
                gemm_atb(wv.data(), gy, colg.data(), Cout, K, static_cast<int>(hw));
                col2im_acc(colg.data(), Cin, H, W, k,
                           px->grad.data() + static_cast<int64_t>(n) * Cin * hw);
            }
        }
    });
}

// ---------------------------------------------------------------------------
// pooling / upsampling
// ---------------------------------------------------------------------------

Var max_pool2(const Var& x) {
    check_4d(x, "max_pool2");
    const int N = x.val().dim(0), C = x.val().dim(1), H = x.val().dim(2), W = x.val().dim(3);
    if (H % 2 != 0 || W % 2 != 0) throw std::invalid_argument("max_pool2: odd dims");
    const int Ho = H / 2, Wo = W / 2;
    Tensor y({N, C, Ho, Wo});
    auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(y.numel()));
    const Tensor& xv = x.val();
    int64_t oi = 0;
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const real* plane = xv.data() + (static_cast<int64_t>(n) * C + c) * H * W;
            const int64_t base = (static_cast<int64_t>(n) * C + c) * H * W;
            for (int yy = 0; yy < Ho; ++yy)
                for (int xx = 0; xx < Wo; ++xx, ++oi) {
                    int64_t i00 = static_cast<int64_t>(2 * yy) * W + 2 * xx;
                    int64_t best = i00;
                    real bv = plane[i00];
                    const int64_t cand[3] = {i00 + 1, i00 + W, i00 + W + 1};
                    for (int64_t ci : cand)
                        if (plane[ci] > bv) {
                            bv = plane[ci];
                            best = ci;
                        }
                    y[oi] = bv;
                    (*argmax)[static_cast<size_t>(oi)] = base + best;
                }
        }
    return make_op(std::move(y), {x}, [argmax](Node& self) {
        Node* p = self.parents[0].get();
        p->ensure_grad();
        for (int64_t i = 0; i < self.grad.numel(); ++i)
            p->grad[(*argmax)[static_cast<size_t>(i)]] += self.grad[i];
    });
}

namespace {

struct LerpTap {
    int i0, i1;
    real w0, w1;
};

// align_corners=false source taps, border-clamped
inline LerpTap up2_tap(int o, int n_in) {
    real s = (o + real(0.5)) / 2 - real(0.5);
    int i0 = static_cast<int>(std::floor(s));
    real w1 = s - i0;
    LerpTap t;
    t.i0 = std::max(0, std::min(n_in - 1, i0));
    t.i1 = std::max(0, std::min(n_in - 1, i0 + 1));
    t.w0 = 1 - w1;
    t.w1 = w1;
    return t;
}

}  // namespace

namespace kernels {

Tensor upsample2_bilinear_forward(const Tensor& x) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Ho = 2 * H, Wo = 2 * W;
    Tensor y({N, C, Ho, Wo});
    std::vector<LerpTap> tx(static_cast<size_t>(Wo));
    for (int ox = 0; ox < Wo; ++ox) tx[static_cast<size_t>(ox)] = up2_tap(ox, W);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const real* in = x.data() + (static_cast<int64_t>(n) * C + c) * H * W;
            real* out = y.data() + (static_cast<int64_t>(n) * C + c) * Ho * Wo;
            for (int oy = 0; oy < Ho; ++oy) {
                LerpTap ty = up2_tap(oy, H);
                const real* r0 = in + static_cast<int64_t>(ty.i0) * W;
                const real* r1 = in + static_cast<int64_t>(ty.i1) * W;
                real* orow = out + static_cast<int64_t>(oy) * Wo;
                for (int ox = 0; ox < Wo; ++ox) {
                    const LerpTap& t = tx[static_cast<size_t>(ox)];
                    orow[ox] = ty.w0 * (t.w0 * r0[t.i0] + t.w1 * r0[t.i1]) +
                               ty.w1 * (t.w0 * r1[t.i0] + t.w1 * r1[t.i1]);
                }
            }
        }
    return y;
}

}  // namespace kernels

Var upsample2_bilinear(const Var& x) {
    check_4d(x, "upsample2_bilinear");
    Tensor y = kernels::upsample2_bilinear_forward(x.val());
    return make_op(std::move(y), {x}, [](Node& self) {
        Node* p = self.parents[0].get();
        p->ensure_grad();
        const int N = p->value.dim(0), C = p->value.dim(1), H = p->value.dim(2),
                  W = p->value.dim(3);
        const int Ho = 2 * H, Wo = 2 * W;
        std::vector<LerpTap> tx(static_cast<size_t>(Wo));
        for (int ox = 0; ox < Wo; ++ox) tx[static_cast<size_t>(ox)] = up2_tap(ox, W);
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                real* gin = p->grad.data() + (static_cast<int64_t>(n) * C + c) * H * W;
                const real* gout = self.grad.data() + (static_cast<int64_t>(n) * C + c) * Ho * Wo;
                for (int oy = 0; oy < Ho; ++oy) {
                    LerpTap ty = up2_tap(oy, H);
                    const real* grow = gout + static_cast<int64_t>(oy) * Wo;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const LerpTap& t = tx[static_cast<size_t>(ox)];
                        const real g = grow[ox];
                        gin[static_cast<int64_t>(ty.i0) * W + t.i0] += g * ty.w0 * t.w0;
                        gin[static_cast<int64_t>(ty.i0) * W + t.i1] += g * ty.w0 * t.w1;
                        gin[static_cast<int64_t>(ty.i1) * W + t.i0] += g * ty.w1 * t.w0;
                        gin[static_cast<int64_t>(ty.i1) * W + t.i1] += g * ty.w1 * t.w1;
                    }
                }
            }
    });
}

// ---------------------------------------------------------------------------
// horizontal warp
// ---------------------------------------------------------------------------

namespace {

void check_warp_args(const Tensor& src, const Tensor& disp) {
    if (src.ndim() != 4 || disp.ndim() != 4) throw std::invalid_argument("warp: expects NCHW");
    if (src.dim(0) != disp.dim(0) || src.dim(2) != disp.dim(2) || src.dim(3) != disp.dim(3))
        throw std::invalid_argument("warp: spatial/batch dim mismatch");
    if (disp.dim(1) < 1 || src.dim(1) % disp.dim(1) != 0)
        throw std::invalid_argument("warp: channel count not divisible by field count");
    if (!all_finite(disp)) throw std::invalid_argument("warp: non-finite disparity");
}

}  // namespace

namespace kernels {

Tensor warp_horizontal_forward(const Tensor& src, const Tensor& disp) {
    check_warp_args(src, disp);
    const int N = src.dim(0), C = src.dim(1), H = src.dim(2), W = src.dim(3);
    const int G = disp.dim(1), cpg = C / G;
    Tensor y({N, C, H, W});
    for (int n = 0; n < N; ++n)
        for (int g = 0; g < G; ++g) {
            const real* dmap = disp.data() + (static_cast<int64_t>(n) * G + g) * H * W;
            for (int c = g * cpg; c < (g + 1) * cpg; ++c) {
                const real* in = src.data() + (static_cast<int64_t>(n) * C + c) * H * W;
                real* out = y.data() + (static_cast<int64_t>(n) * C + c) * H * W;
                for (int yy = 0; yy < H; ++yy) {
                    const real* irow = in + static_cast<int64_t>(yy) * W;
                    const real* drow = dmap + static_cast<int64_t>(yy) * W;
                    real* orow = out + static_cast<int64_t>(yy) * W;
                    for (int xx = 0; xx < W; ++xx) {
                        const real xs = xx - drow[xx];
                        const int x0 = static_cast<int>(std::floor(xs));
                        const real w1 = xs - x0;
                        const real v0 = (x0 >= 0 && x0 < W) ? irow[x0] : real(0);
                        const real v1 = (x0 + 1 >= 0 && x0 + 1 < W) ? irow[x0 + 1] : real(0);
                        orow[xx] = (1 - w1) * v0 + w1 * v1;
                    }
                }
            }
        }
    return y;
}

}  // namespace kernels

Var warp_horizontal(const Var& src, const Var& disp) {
    Tensor y = kernels::warp_horizontal_forward(src.val(), disp.val());
    return make_op(std::move(y), {src, disp}, [](Node& self) {
        Node* ps = self.parents[0].get();
        Node* pd = self.parents[1].get();
        const Tensor& sv = ps->value;
        const Tensor& dv = pd->value;
        const int N = sv.dim(0), C = sv.dim(1), H = sv.dim(2), W = sv.dim(3);
        const int G = dv.dim(1), cpg = C / G;
        const bool need_s = ps->needs_grad, need_d = pd->needs_grad;
        if (need_s) ps->ensure_grad();
        if (need_d) pd->ensure_grad();
        for (int n = 0; n < N; ++n)
            for (int g = 0; g < G; ++g) {
                const real* dmap = dv.data() + (static_cast<int64_t>(n) * G + g) * H * W;
                real* gd = need_d ? pd->grad.data() + (static_cast<int64_t>(n) * G + g) * H * W
                                  : nullptr;
                for (int c = g * cpg; c < (g + 1) * cpg; ++c) {
                    const real* in = sv.data() + (static_cast<int64_t>(n) * C + c) * H * W;
                    const real* gout = self.grad.data() + (static_cast<int64_t>(n) * C + c) * H * W;
                    real* gs = need_s ? ps->grad.data() + (static_cast<int64_t>(n) * C + c) * H * W
                                      : nullptr;
                    for (int yy = 0; yy < H; ++yy) {
                        const int64_t row = static_cast<int64_t>(yy) * W;
                        for (int xx = 0; xx < W; ++xx) {
                            const real xs = xx - dmap[row + xx];
                            const int x0 = static_cast<int>(std::floor(xs));
                            const real w1 = xs - x0;
                            const bool in0 = x0 >= 0 && x0 < W;
                            const bool in1 = x0 + 1 >= 0 && x0 + 1 < W;
                            const real g = gout[row + xx];
                            if (need_s) {
                                if (in0) gs[row + x0] += (1 - w1) * g;
                                if (in1) gs[row + x0 + 1] += w1 * g;
                            }
                            if (need_d) {
                                const real v0 = in0 ? in[row + x0] : real(0);
                                const real v1 = in1 ? in[row + x0 + 1] : real(0);
                                // d out / d disp = -(v1 - v0)
                                gd[row + xx] += g * (v0 - v1);
                            }
                        }
                    }
                }
            }
    });
}

// ---------------------------------------------------------------------------
// total variation
// ---------------------------------------------------------------------------

Var tv_loss(const Var& d) {
    const Tensor& t = d.val();
    if (t.ndim() < 2) throw std::invalid_argument("tv_loss: need at least 2 dims");
    const int W = t.dim(t.ndim() - 1);
    const int H = t.dim(t.ndim() - 2);
    const int64_t maps = t.numel() / (static_cast<int64_t>(H) * W);
    const real norm = real(1) / (static_cast<real>(maps) * H * W);
    real acc = 0;
    for (int64_t m = 0; m < maps; ++m) {
        const real* p = t.data() + m * H * W;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                if (x + 1 < W) acc += std::fabs(p[y * W + x + 1] - p[y * W + x]);
                if (y + 1 < H) acc += std::fabs(p[(y + 1) * W + x] - p[y * W + x]);
            }
    }
    Tensor y({1});
    y[0] = acc * norm;
    return make_op(std::move(y), {d}, [H, W, maps, norm](Node& self) {
        Node* p = self.parents[0].get();
        p->ensure_grad();
        const real g = self.grad[0] * norm;
        for (int64_t m = 0; m < maps; ++m) {
            const real* v = p->value.data() + m * H * W;
            real* gv = p->grad.data() + m * H * W;
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    if (x + 1 < W) {
                        real diff = v[y * W + x + 1] - v[y * W + x];
                        real s = diff > 0 ? g : (diff < 0 ? -g : real(0));
                        gv[y * W + x + 1] += s;
                        gv[y * W + x] -= s;
                    }
                    if (y + 1 < H) {
                        real diff = v[(y + 1) * W + x] - v[y * W + x];
                        real s = diff > 0 ? g : (diff < 0 ? -g : real(0));
                        gv[(y + 1) * W + x] += s;
                        gv[y * W + x] -= s;
                    }
                }
        }
    });
}

}  // namespace sted
