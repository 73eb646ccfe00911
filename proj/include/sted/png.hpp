#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sted/tensor.hpp"

namespace sted::png {

struct Image8 {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> rgb;  // 3 bytes per pixel, row-major

    Image8() = default;
    Image8(int w, int h, uint8_t fill = 0)
        : width(w), height(h), rgb(static_cast<size_t>(w) * h * 3, fill) {}
    void set(int x, int y, uint8_t r, uint8_t g, uint8_t b) {
        if (x < 0 || y < 0 || x >= width || y >= height) return;
        size_t i = (static_cast<size_t>(y) * width + x) * 3;
        rgb[i] = r;
        rgb[i + 1] = g;
        rgb[i + 2] = b;
    }
};

void write_png(const std::string& path, const Image8& img);

// [0,1]-clipped intensity tensor ({H,W} or {C,H,W}, C = 1 or 3) to RGB
Image8 from_intensity(const Tensor& t);

// perceptually-uniform ramp with the value range printed in a footer strip
Image8 colormap_disparity(const Tensor& hw, real vmin, real vmax);
Image8 colormap_disparity(const Tensor& hw);  // auto range

Image8 grid(const std::vector<Image8>& tiles, int cols, int pad = 2);

// simple polyline chart of one or more series on shared axes
Image8 plot_curves(const std::vector<std::vector<real>>& series, int width = 480,
                   int height = 320);

void draw_text(Image8& img, int x, int y, const std::string& text, uint8_t r = 255,
               uint8_t g = 255, uint8_t b = 255);

}  // namespace sted::png
