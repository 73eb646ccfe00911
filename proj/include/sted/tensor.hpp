#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace sted {

using real = double;

// Dense row-major tensor. Shape is a short list of extents, e.g. {C,H,W}
// or {N,C,H,W}. Value semantics; moves are cheap.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape)
        : shape_(std::move(shape)), data_(numel_of(shape_), real(0)) {}
    Tensor(std::vector<int> shape, real fill)
        : shape_(std::move(shape)), data_(numel_of(shape_), fill) {}

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    real* data() { return data_.data(); }
    const real* data() const { return data_.data(); }
    real& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    real operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void fill(real v) { data_.assign(data_.size(), v); }

    static int64_t numel_of(const std::vector<int>& shape) {
        if (shape.empty()) return 0;
        int64_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }

private:
    std::vector<int> shape_;
    std::vector<real> data_;
};

inline bool all_finite(const Tensor& t) {
    const real* p = t.data();
    for (int64_t i = 0; i < t.numel(); ++i)
        if (!std::isfinite(p[i])) return false;
    return true;
}

inline real tensor_sum(const Tensor& t) {
    real s = 0;
    for (int64_t i = 0; i < t.numel(); ++i) s += t[i];
    return s;
}

inline real tensor_max_abs(const Tensor& t) {
    real m = 0;
    for (int64_t i = 0; i < t.numel(); ++i) {
        real a = t[i] < 0 ? -t[i] : t[i];
        if (a > m) m = a;
    }
    return m;
}

}  // namespace sted
