#pragma once

#include <string>

#include "sted/autograd.hpp"
#include "sted/events.hpp"
#include "sted/tensor.hpp"

namespace sted::geometry {

enum class ImageRole { intensity, feature, voxel };

// C x H x W real tensor with a role tag. Intensity images live in [0,1].
struct ImageTensor {
    Tensor data;  // {C, H, W}
    ImageRole role = ImageRole::intensity;

    int channels() const { return data.dim(0); }
    int height() const { return data.dim(1); }
    int width() const { return data.dim(2); }
    void validate() const;
};

// Horizontal displacement field in pixels. Convention "x_minus_d":
// out(y, x) samples in(y, x - d(y, x)); positive d shifts sampling leftward.
struct DisparityMap {
    Tensor data;  // {H, W}

    int height() const { return data.dim(0); }
    int width() const { return data.dim(1); }
    void validate() const;  // finite values, 2-D
};

// Bilinear horizontal backward warp with zero contribution from taps
// outside [0, W-1]. Differentiable counterpart lives in sted::warp_horizontal.
ImageTensor backward_warp(const ImageTensor& src, const DisparityMap& disp);

// Space-to-depth and inverse; channel order (c, dy, dx) fastest-last, i.e.
// a 2x2 block [[a,b],[c,d]] becomes channels (a,b,c,d).
ImageTensor pixel_unshuffle(const ImageTensor& t, int r);
ImageTensor pixel_shuffle(const ImageTensor& t, int r);

// Warp every temporal bin with the single exposure-level disparity map.
events::VoxelGrid align_events(const events::VoxelGrid& voxel, const DisparityMap& disp);

// ---- raw float32 serialization with JSON sidecar ----
void write_raw(const std::string& path, const Tensor& t);            // .raw + .json sidecar
Tensor read_raw(const std::string& path);                            // shape from sidecar
void write_disparity(const std::string& path, const DisparityMap& d);
DisparityMap read_disparity(const std::string& path);

}  // namespace sted::geometry
