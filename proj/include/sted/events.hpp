#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sted/tensor.hpp"

namespace sted::events {

struct Event {
    uint64_t t = 0;  // microseconds
    uint16_t x = 0;
    uint16_t y = 0;
    int8_t p = 1;  // polarity, +1 or -1
};

// Time-ordered polarity events on a sensor grid with an exposure window.
struct EventStream {
    std::vector<Event> events;
    int width = 0;
    int height = 0;
    uint64_t t_start = 0;
    uint64_t t_end = 0;

    void validate() const;  // throws std::invalid_argument on broken invariants
};

// Binned, signed spatio-temporal event tensor: data is [bins, H, W].
struct VoxelGrid {
    Tensor data;
    int bins = 0;
    uint64_t t_start = 0;
    uint64_t t_end = 0;
};

struct EventSimConfig {
    real threshold_c = 0.15;  // log-intensity contrast threshold
    real log_eps = 1e-3;      // floor added before taking logs
    uint64_t refractory_us = 0;
};

// Grayscale frame in [0,1], row-major H x W.
struct IntensityFrame {
    Tensor data;  // {H, W}
    int height() const { return data.dim(0); }
    int width() const { return data.dim(1); }
};

// Each event deposits its polarity at (y,x), split between the two nearest
// temporal bin centers by linear interpolation. Bin centers are uniformly
// spaced across [t_start, t_end] (bin k at t_start + k*T/(bins-1)); with
// bins == 1 all mass lands in the single bin. Total signed mass is preserved.
VoxelGrid voxelize(const EventStream& stream, int bins);

// Threshold-crossing simulation: per pixel a log-intensity reference is kept;
// whenever the linearly interpolated log intensity reaches the reference
// +/- threshold_c, an event is emitted at the interpolated timestamp and the
// reference advances by +/- threshold_c. Output is sorted by timestamp
// (ties broken by pixel scan order).
EventStream simulate_events(const std::vector<IntensityFrame>& frames,
                            const std::vector<uint64_t>& timestamps, const EventSimConfig& cfg);

// Pixel-wise arithmetic mean over the exposure stack.
IntensityFrame synthesize_blur(const std::vector<IntensityFrame>& frames);

// Classical event-based deblurring via the exponential double-integral
// relation: I_f = B * T / integral_T exp(c * (phi(t) - phi(f))) dt, with phi
// the per-pixel cumulative polarity count. m latent frames are placed at
// uniform timestamps across the exposure (endpoints included; midpoint for
// m == 1). Empty stream reproduces the blurry input.
std::vector<IntensityFrame> edi_deblur(const IntensityFrame& blurry, const EventStream& stream,
                                       real c, int m);

// uniform latent-frame timestamps within [t0, t1], endpoints included
std::vector<uint64_t> latent_timestamps(uint64_t t0, uint64_t t1, int m);

// ---- binary event file ("stev") with JSON sidecar ----
void write_stev(const std::string& path, const EventStream& s);
EventStream read_stev(const std::string& path);

}  // namespace sted::events
