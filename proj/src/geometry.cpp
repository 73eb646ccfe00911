#include "sted/geometry.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "sted/errors.hpp"

namespace sted::geometry {

void ImageTensor::validate() const {
    if (data.ndim() != 3) throw std::invalid_argument("ImageTensor: expects C x H x W");
    if (data.dim(0) <= 0 || data.dim(1) <= 0 || data.dim(2) <= 0)
        throw std::invalid_argument("ImageTensor: non-positive dims");
    if (role == ImageRole::intensity) {
        for (int64_t i = 0; i < data.numel(); ++i)
            if (data[i] < -1e-9 || data[i] > 1 + 1e-9)
                throw std::invalid_argument("ImageTensor: intensity outside [0,1]");
    }
}

void DisparityMap::validate() const {
    if (data.ndim() != 2) throw std::invalid_argument("DisparityMap: expects H x W");
    if (!all_finite(data)) throw std::invalid_argument("DisparityMap: non-finite values");
}

namespace {

Tensor as_batch(const Tensor& t) {  // {C,H,W} -> {1,C,H,W} copy
    Tensor out({1, t.dim(0), t.dim(1), t.dim(2)});
    std::copy(t.data(), t.data() + t.numel(), out.data());
    return out;
}

Tensor from_batch(const Tensor& t) {  // {1,C,H,W} -> {C,H,W} copy
    Tensor out({t.dim(1), t.dim(2), t.dim(3)});
    std::copy(t.data(), t.data() + t.numel(), out.data());
    return out;
}

}  // namespace

ImageTensor backward_warp(const ImageTensor& src, const DisparityMap& disp) {
    disp.validate();
    if (disp.height() != src.height() || disp.width() != src.width())
        throw std::invalid_argument("backward_warp: disparity/source dim mismatch");
    Tensor d4({1, 1, disp.height(), disp.width()});
    std::copy(disp.data.data(), disp.data.data() + disp.data.numel(), d4.data());
    ImageTensor out;
    out.role = src.role == ImageRole::intensity ? ImageRole::feature : src.role;
    out.data = from_batch(kernels::warp_horizontal_forward(as_batch(src.data), d4));
    return out;
}

ImageTensor pixel_unshuffle(const ImageTensor& t, int r) {
    ImageTensor out;
    out.role = t.role;
    out.data = from_batch(kernels::pixel_unshuffle_forward(as_batch(t.data), r));
    return out;
}

ImageTensor pixel_shuffle(const ImageTensor& t, int r) {
    ImageTensor out;
    out.role = t.role;
    out.data = from_batch(kernels::pixel_shuffle_forward(as_batch(t.data), r));
    return out;
}

events::VoxelGrid align_events(const events::VoxelGrid& voxel, const DisparityMap& disp) {
    disp.validate();
    events::VoxelGrid out;
    out.bins = voxel.bins;
    out.t_start = voxel.t_start;
    out.t_end = voxel.t_end;
    if (voxel.data.dim(1) != disp.height() || voxel.data.dim(2) != disp.width())
        throw std::invalid_argument("align_events: dim mismatch");
    Tensor src({1, voxel.bins, voxel.data.dim(1), voxel.data.dim(2)});
    std::copy(voxel.data.data(), voxel.data.data() + voxel.data.numel(), src.data());
    Tensor d4({1, 1, disp.height(), disp.width()});
    std::copy(disp.data.data(), disp.data.data() + disp.data.numel(), d4.data());
    out.data = from_batch(kernels::warp_horizontal_forward(src, d4));
    return out;
}

// ---------------------------------------------------------------------------
// raw float32 + sidecar
// ---------------------------------------------------------------------------

void write_raw(const std::string& path, const Tensor& t) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open for write: " + path);
    std::vector<float> buf(static_cast<size_t>(t.numel()));
    for (int64_t i = 0; i < t.numel(); ++i) buf[static_cast<size_t>(i)] = static_cast<float>(t[i]);
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    nlohmann::json side;
    side["shape"] = t.shape();
    side["dtype"] = "float32";
    side["order"] = "row_major";
    std::ofstream js(path + ".json");
    js << side.dump(2) << "\n";
}

Tensor read_raw(const std::string& path) {
    std::ifstream js(path + ".json");
    if (!js) throw FormatError("missing sidecar: " + path + ".json");
    nlohmann::json side;
    try {
        js >> side;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad sidecar " + path + ".json: " + e.what());
    }
    std::vector<int> shape = side.at("shape").get<std::vector<int>>();
    if (side.value("dtype", "float32") != "float32")
        throw FormatError("unsupported raw dtype in " + path);
    Tensor t(shape);
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open: " + path);
    std::vector<float> buf(static_cast<size_t>(t.numel()));
    f.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (f.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(float)))
        throw FormatError("short read: " + path);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = buf[static_cast<size_t>(i)];
    return t;
}

void write_disparity(const std::string& path, const DisparityMap& d) {
    d.validate();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open for write: " + path);
    std::vector<float> buf(static_cast<size_t>(d.data.numel()));
    for (int64_t i = 0; i < d.data.numel(); ++i)
        buf[static_cast<size_t>(i)] = static_cast<float>(d.data[i]);
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    nlohmann::json side;
    side["height"] = d.height();
    side["width"] = d.width();
    side["dtype"] = "float32";
    side["convention"] = "x_minus_d";
    std::ofstream js(path + ".json");
    js << side.dump(2) << "\n";
}

DisparityMap read_disparity(const std::string& path) {
    std::ifstream js(path + ".json");
    if (!js) throw FormatError("missing sidecar: " + path + ".json");
    nlohmann::json side;
    try {
        js >> side;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad sidecar " + path + ".json: " + e.what());
    }
    const int H = side.at("height").get<int>();
    const int W = side.at("width").get<int>();
    if (side.value("convention", "x_minus_d") != "x_minus_d")
        throw FormatError("unknown disparity convention in " + path);
    DisparityMap d;
    d.data = Tensor({H, W});
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open: " + path);
    std::vector<float> buf(static_cast<size_t>(d.data.numel()));
    f.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (f.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(float)))
        throw FormatError("short read: " + path);
    for (int64_t i = 0; i < d.data.numel(); ++i) d.data[i] = buf[static_cast<size_t>(i)];
    return d;
}

}  // namespace sted::geometry
