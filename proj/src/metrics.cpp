#include "sted/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace sted::metrics {

namespace {

void check_same(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

real psnr(const Tensor& a, const Tensor& b, real peak, real max_db) {
    check_same(a, b, "psnr");
    real mse = 0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        const real d = a[i] - b[i];
        mse += d * d;
    }
    mse /= static_cast<real>(a.numel());
    const real floor_mse = peak * peak * std::pow(real(10), -max_db / 10);
    if (mse <= floor_mse) return max_db;
    return 10 * std::log10(peak * peak / mse);
}

namespace {

std::vector<real> gauss_kernel(int n, real sigma) {
    std::vector<real> k(static_cast<size_t>(n));
    const real c = (n - 1) / real(2);
    real s = 0;
    for (int i = 0; i < n; ++i) {
        k[static_cast<size_t>(i)] = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma));
        s += k[static_cast<size_t>(i)];
    }
    for (real& v : k) v /= s;
    return k;
}

// separable valid-region filter of a single H x W plane
std::vector<real> filter_valid(const real* img, int H, int W, const std::vector<real>& k) {
    const int n = static_cast<int>(k.size());
    const int Hv = H - n + 1, Wv = W - n + 1;
    std::vector<real> tmp(static_cast<size_t>(H) * Wv);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < Wv; ++x) {
            real s = 0;
            for (int i = 0; i < n; ++i) s += k[static_cast<size_t>(i)] * img[y * W + x + i];
            tmp[static_cast<size_t>(y) * Wv + x] = s;
        }
    std::vector<real> out(static_cast<size_t>(Hv) * Wv);
    for (int y = 0; y < Hv; ++y)
        for (int x = 0; x < Wv; ++x) {
            real s = 0;
            for (int i = 0; i < n; ++i) s += k[static_cast<size_t>(i)] * tmp[(y + i) * Wv + x];
            out[static_cast<size_t>(y) * Wv + x] = s;
        }
    return out;
}

real ssim_plane(const real* pa, const real* pb, int H, int W, real peak, int window,
                real sigma) {
    int n = std::min(window, std::min(H, W));
    if (n % 2 == 0) --n;
    if (n < 1) throw std::invalid_argument("ssim: image too small");
    const auto k = gauss_kernel(n, sigma);
    const int64_t hw = static_cast<int64_t>(H) * W;

    std::vector<real> aa(static_cast<size_t>(hw)), bb(static_cast<size_t>(hw)),
        ab(static_cast<size_t>(hw));
    for (int64_t i = 0; i < hw; ++i) {
        aa[static_cast<size_t>(i)] = pa[i] * pa[i];
        bb[static_cast<size_t>(i)] = pb[i] * pb[i];
        ab[static_cast<size_t>(i)] = pa[i] * pb[i];
    }
    const auto mu_a = filter_valid(pa, H, W, k);
    const auto mu_b = filter_valid(pb, H, W, k);
    const auto m_aa = filter_valid(aa.data(), H, W, k);
    const auto m_bb = filter_valid(bb.data(), H, W, k);
    const auto m_ab = filter_valid(ab.data(), H, W, k);

    const real c1 = (real(0.01) * peak) * (real(0.01) * peak);
    const real c2 = (real(0.03) * peak) * (real(0.03) * peak);
    real acc = 0;
    for (size_t i = 0; i < mu_a.size(); ++i) {
        const real ma = mu_a[i], mb = mu_b[i];
        const real va = m_aa[i] - ma * ma;
        const real vb = m_bb[i] - mb * mb;
        const real cov = m_ab[i] - ma * mb;
        acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    return acc / static_cast<real>(mu_a.size());
}

}  // namespace

real ssim(const Tensor& a, const Tensor& b, real peak, int window, real sigma) {
    check_same(a, b, "ssim");
    if (a.ndim() == 2) return ssim_plane(a.data(), b.data(), a.dim(0), a.dim(1), peak, window, sigma);
    if (a.ndim() == 3) {
        const int C = a.dim(0), H = a.dim(1), W = a.dim(2);
        real acc = 0;
        for (int c = 0; c < C; ++c)
            acc += ssim_plane(a.data() + static_cast<int64_t>(c) * H * W,
                              b.data() + static_cast<int64_t>(c) * H * W, H, W, peak, window,
                              sigma);
        return acc / C;
    }
    throw std::invalid_argument("ssim: expects H x W or C x H x W");
}

real epe(const Tensor& pred, const Tensor& gt, const Tensor* mask) {
    check_same(pred, gt, "epe");
    real acc = 0;
    int64_t n = 0;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        if (mask && (*mask)[i] == 0) continue;
        acc += std::fabs(pred[i] - gt[i]);
        ++n;
    }
    if (n == 0) throw std::invalid_argument("epe: empty mask");
    return acc / static_cast<real>(n);
}

real bad_pixel_ratio(const Tensor& pred, const Tensor& gt, real tau, const Tensor* mask) {
    check_same(pred, gt, "bad_pixel_ratio");
    int64_t bad = 0, n = 0;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        if (mask && (*mask)[i] == 0) continue;
        if (std::fabs(pred[i] - gt[i]) > tau) ++bad;
        ++n;
    }
    if (n == 0) throw std::invalid_argument("bad_pixel_ratio: empty mask");
    return 100 * static_cast<real>(bad) / static_cast<real>(n);
}

}  // namespace sted::metrics
