#pragma once

#include <optional>

#include "sted/tensor.hpp"

namespace sted::metrics {

// PSNR in dB, capped at max_db (the cap also guards the MSE == 0 case).
real psnr(const Tensor& a, const Tensor& b, real peak = 1.0, real max_db = 99.0);

// SSIM with a Gaussian window (default 11x11, sigma 1.5), standard C1/C2
// stabilizers, valid-region aggregation, mean over channels for C x H x W
// input. The window shrinks to the largest odd size that fits small images.
real ssim(const Tensor& a, const Tensor& b, real peak = 1.0, int window = 11,
          real sigma = 1.5);

// Mean absolute disparity error over the mask (all pixels when absent).
real epe(const Tensor& pred, const Tensor& gt, const Tensor* mask = nullptr);

// Percentage of masked pixels with |pred - gt| > tau.
real bad_pixel_ratio(const Tensor& pred, const Tensor& gt, real tau,
                     const Tensor* mask = nullptr);

}  // namespace sted::metrics
