#include "sted/png.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "sted/errors.hpp"

namespace sted::png {

// ---------------------------------------------------------------------------
// encoder: zlib stream with stored deflate blocks, so no compressor needed
// ---------------------------------------------------------------------------

namespace {

uint32_t crc_table[256];
bool crc_ready = false;

void init_crc() {
    if (crc_ready) return;
    for (uint32_t n = 0; n < 256; ++n) {
        uint32_t c = n;
        for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
        crc_table[n] = c;
    }
    crc_ready = true;
}

uint32_t crc32(const uint8_t* p, size_t n, uint32_t crc = 0xffffffffu) {
    init_crc();
    for (size_t i = 0; i < n; ++i) crc = crc_table[(crc ^ p[i]) & 0xff] ^ (crc >> 8);
    return crc;
}

uint32_t adler32(const uint8_t* p, size_t n) {
    uint32_t a = 1, b = 0;
    for (size_t i = 0; i < n; ++i) {
        a = (a + p[i]) % 65521u;
        b = (b + a) % 65521u;
    }
    return (b << 16) | a;
}

void put_be32(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back(static_cast<uint8_t>(x >> 24));
    v.push_back(static_cast<uint8_t>(x >> 16));
    v.push_back(static_cast<uint8_t>(x >> 8));
    v.push_back(static_cast<uint8_t>(x));
}

void chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& data) {
    put_be32(out, static_cast<uint32_t>(data.size()));
    std::vector<uint8_t> td;
    td.insert(td.end(), type, type + 4);
    td.insert(td.end(), data.begin(), data.end());
    out.insert(out.end(), td.begin(), td.end());
    put_be32(out, crc32(td.data(), td.size()) ^ 0xffffffffu);
}

}  // namespace

void write_png(const std::string& path, const Image8& img) {
    if (img.width <= 0 || img.height <= 0) throw std::invalid_argument("write_png: empty image");
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(img.height) * (1 + static_cast<size_t>(img.width) * 3));
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);  // filter: none
        const uint8_t* row = img.rgb.data() + static_cast<size_t>(y) * img.width * 3;
        raw.insert(raw.end(), row, row + static_cast<size_t>(img.width) * 3);
    }

    std::vector<uint8_t> idat;
    idat.push_back(0x78);
    idat.push_back(0x01);
    size_t off = 0;
    while (off < raw.size()) {
        const size_t n = std::min<size_t>(65535, raw.size() - off);
        const bool last = off + n == raw.size();
        idat.push_back(last ? 1 : 0);
        idat.push_back(static_cast<uint8_t>(n & 0xff));
        idat.push_back(static_cast<uint8_t>(n >> 8));
        idat.push_back(static_cast<uint8_t>(~n & 0xff));
        idat.push_back(static_cast<uint8_t>((~n >> 8) & 0xff));
        idat.insert(idat.end(), raw.begin() + static_cast<long>(off),
                    raw.begin() + static_cast<long>(off + n));
        off += n;
    }
    put_be32(idat, adler32(raw.data(), raw.size()));

    std::vector<uint8_t> out = {137, 80, 78, 71, 13, 10, 26, 10};
    std::vector<uint8_t> ihdr;
    put_be32(ihdr, static_cast<uint32_t>(img.width));
    put_be32(ihdr, static_cast<uint32_t>(img.height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // truecolor
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    chunk(out, "IHDR", ihdr);
    chunk(out, "IDAT", idat);
    chunk(out, "IEND", {});

    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open for write: " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

// ---------------------------------------------------------------------------
// rasterization helpers
// ---------------------------------------------------------------------------

namespace {

uint8_t to_u8(real v) {
    v = std::min(real(1), std::max(real(0), v));
    return static_cast<uint8_t>(std::lround(v * 255));
}

// compact 3x5 glyphs, 15 bits row-major from the top
struct Glyph {
    char ch;
    uint16_t bits;
};
constexpr Glyph kGlyphs[] = {
    {'0', 0b111101101101111}, {'1', 0b010110010010111}, {'2', 0b111001111100111},
    {'3', 0b111001111001111}, {'4', 0b101101111001001}, {'5', 0b111100111001111},
    {'6', 0b111100111101111}, {'7', 0b111001010010010}, {'8', 0b111101111101111},
    {'9', 0b111101111001111}, {'.', 0b000000000000010}, {'-', 0b000000111000000},
    {'m', 0b000110111101101}, {'i', 0b010000010010010}, {'n', 0b000110101101101},
    {'a', 0b000011101101011}, {'x', 0b000101010010101}, {' ', 0b000000000000000},
    {'p', 0b000110101110100}, {'s', 0b000011110011110}, {'e', 0b000111110100111},
    {'t', 0b010111010010011}, {'l', 0b010010010010011}, {'o', 0b000010101101010},
    {'d', 0b001011101101011}, {'g', 0b000011101011110}, {'r', 0b000110101100100},
    {'b', 0b100110101101110}, {'f', 0b011100110100100}, {'v', 0b000101101101010},
    {'u', 0b000101101101011}, {'c', 0b000011100100011},
};

const Glyph* find_glyph(char c) {
    for (const Glyph& g : kGlyphs)
        if (g.ch == c) return &g;
    return nullptr;
}

}  // namespace

void draw_text(Image8& img, int x, int y, const std::string& text, uint8_t r, uint8_t g,
               uint8_t b) {
    int cx = x;
    for (char c : text) {
        const Glyph* gl = find_glyph(static_cast<char>(std::tolower(c)));
        if (gl) {
            for (int gy = 0; gy < 5; ++gy)
                for (int gx = 0; gx < 3; ++gx)
                    if (gl->bits >> (14 - (gy * 3 + gx)) & 1) img.set(cx + gx, y + gy, r, g, b);
        }
        cx += 4;
    }
}

Image8 from_intensity(const Tensor& t) {
    int C = 1, H = 0, W = 0;
    if (t.ndim() == 2) {
        H = t.dim(0);
        W = t.dim(1);
    } else if (t.ndim() == 3 && (t.dim(0) == 1 || t.dim(0) == 3)) {
        C = t.dim(0);
        H = t.dim(1);
        W = t.dim(2);
    } else {
        throw std::invalid_argument("from_intensity: expects {H,W} or {1|3,H,W}");
    }
    Image8 img(W, H);
    const int64_t hw = static_cast<int64_t>(H) * W;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const int64_t i = static_cast<int64_t>(y) * W + x;
            if (C == 3)
                img.set(x, y, to_u8(t[i]), to_u8(t[hw + i]), to_u8(t[2 * hw + i]));
            else
                img.set(x, y, to_u8(t[i]), to_u8(t[i]), to_u8(t[i]));
        }
    return img;
}

namespace {

// sampled anchors of a perceptually-uniform dark-to-bright ramp
constexpr uint8_t kRamp[][3] = {{68, 1, 84},    {71, 44, 122},  {59, 81, 139},
                                {44, 113, 142}, {33, 144, 141}, {39, 173, 129},
                                {92, 200, 99},  {170, 220, 50}, {253, 231, 37}};

void ramp_color(real v, uint8_t& r, uint8_t& g, uint8_t& b) {
    v = std::min(real(1), std::max(real(0), v));
    const real s = v * 8;
    const int i = std::min(7, static_cast<int>(s));
    const real f = s - i;
    r = static_cast<uint8_t>(std::lround(kRamp[i][0] + f * (kRamp[i + 1][0] - kRamp[i][0])));
    g = static_cast<uint8_t>(std::lround(kRamp[i][1] + f * (kRamp[i + 1][1] - kRamp[i][1])));
    b = static_cast<uint8_t>(std::lround(kRamp[i][2] + f * (kRamp[i + 1][2] - kRamp[i][2])));
}

}  // namespace

Image8 colormap_disparity(const Tensor& hw, real vmin, real vmax) {
    if (hw.ndim() != 2) throw std::invalid_argument("colormap_disparity: expects {H,W}");
    const int H = hw.dim(0), W = hw.dim(1);
    const int footer = 9;
    Image8 img(W, H + footer, 16);
    const real span = vmax > vmin ? vmax - vmin : real(1);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            uint8_t r, g, b;
            ramp_color((hw[static_cast<int64_t>(y) * W + x] - vmin) / span, r, g, b);
            img.set(x, y, r, g, b);
        }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "min %.2f", vmin);
    draw_text(img, 2, H + 2, buf);
    std::snprintf(buf, sizeof(buf), "max %.2f", vmax);
    draw_text(img, std::max(2, W - 4 * static_cast<int>(std::strlen(buf)) - 2), H + 2, buf);
    return img;
}

Image8 colormap_disparity(const Tensor& hw) {
    real vmin = hw.numel() ? hw[0] : 0;
    real vmax = vmin;
    for (int64_t i = 0; i < hw.numel(); ++i) {
        vmin = std::min(vmin, hw[i]);
        vmax = std::max(vmax, hw[i]);
    }
    return colormap_disparity(hw, vmin, vmax);
}

Image8 grid(const std::vector<Image8>& tiles, int cols, int pad) {
    if (tiles.empty()) throw std::invalid_argument("grid: empty");
    cols = std::max(1, std::min(cols, static_cast<int>(tiles.size())));
    const int rows = (static_cast<int>(tiles.size()) + cols - 1) / cols;
    int tw = 0, th = 0;
    for (const Image8& t : tiles) {
        tw = std::max(tw, t.width);
        th = std::max(th, t.height);
    }
    Image8 out(cols * (tw + pad) + pad, rows * (th + pad) + pad, 24);
    for (size_t i = 0; i < tiles.size(); ++i) {
        const int cx = pad + (static_cast<int>(i) % cols) * (tw + pad);
        const int cy = pad + (static_cast<int>(i) / cols) * (th + pad);
        const Image8& t = tiles[i];
        for (int y = 0; y < t.height; ++y)
            for (int x = 0; x < t.width; ++x) {
                const size_t j = (static_cast<size_t>(y) * t.width + x) * 3;
                out.set(cx + x, cy + y, t.rgb[j], t.rgb[j + 1], t.rgb[j + 2]);
            }
    }
    return out;
}

Image8 plot_curves(const std::vector<std::vector<real>>& series, int width, int height) {
    Image8 img(width, height, 255);
    const int ml = 8, mr = 6, mt = 6, mb = 12;
    real vmin = 0, vmax = 1;
    size_t maxlen = 2;
    bool first = true;
    for (const auto& s : series)
        for (real v : s) {
            if (first) {
                vmin = vmax = v;
                first = false;
            }
            vmin = std::min(vmin, v);
            vmax = std::max(vmax, v);
        }
    for (const auto& s : series) maxlen = std::max(maxlen, s.size());
    if (vmax <= vmin) vmax = vmin + 1;

    // axes
    for (int x = ml; x < width - mr; ++x) img.set(x, height - mb, 0, 0, 0);
    for (int y = mt; y < height - mb; ++y) img.set(ml, y, 0, 0, 0);

    constexpr uint8_t palette[][3] = {{31, 119, 180}, {255, 127, 14}, {44, 160, 44},
                                      {214, 39, 40},  {148, 103, 189}};
    const int pw = width - ml - mr - 1, ph = height - mt - mb - 1;
    for (size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const uint8_t* col = palette[si % 5];
        int px = -1, py = -1;
        for (size_t i = 0; i < s.size(); ++i) {
            const int x = ml + 1 + static_cast<int>(static_cast<real>(i) * pw /
                                                    static_cast<real>(maxlen - 1));
            const int y = height - mb - 1 -
                          static_cast<int>((s[i] - vmin) / (vmax - vmin) * ph);
            if (px >= 0) {
                // Bresenham-ish segment
                const int steps = std::max(std::abs(x - px), std::abs(y - py));
                for (int k = 0; k <= steps; ++k) {
                    const int ix = px + (x - px) * k / std::max(1, steps);
                    const int iy = py + (y - py) * k / std::max(1, steps);
                    img.set(ix, iy, col[0], col[1], col[2]);
                }
            } else {
                img.set(x, y, col[0], col[1], col[2]);
            }
            px = x;
            py = y;
        }
    }
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.4g", vmax);
    draw_text(img, ml + 2, mt, buf, 60, 60, 60);
    std::snprintf(buf, sizeof(buf), "%.4g", vmin);
    draw_text(img, ml + 2, height - mb - 6, buf, 60, 60, 60);
    return img;
}

}  // namespace sted::png
