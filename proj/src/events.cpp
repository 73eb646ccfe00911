#include "sted/events.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "sted/errors.hpp"

namespace sted::events {

void EventStream::validate() const {
    if (width <= 0 || height <= 0) throw std::invalid_argument("EventStream: bad dims");
    if (t_start >= t_end) throw std::invalid_argument("EventStream: t_start must be < t_end");
    uint64_t prev = t_start;
    for (const Event& e : events) {
        if (e.x >= width || e.y >= height)
            throw std::invalid_argument("EventStream: event outside spatial bounds");
        if (e.p != 1 && e.p != -1) throw std::invalid_argument("EventStream: bad polarity");
        if (e.t < prev) throw std::invalid_argument("EventStream: timestamps not monotone");
        if (e.t > t_end) throw std::invalid_argument("EventStream: event outside window");
        prev = e.t;
    }
}

VoxelGrid voxelize(const EventStream& stream, int bins) {
    if (bins < 1) throw std::invalid_argument("voxelize: bins must be >= 1");
    stream.validate();
    VoxelGrid g;
    g.bins = bins;
    g.t_start = stream.t_start;
    g.t_end = stream.t_end;
    g.data = Tensor({bins, stream.height, stream.width});
    const real span = static_cast<real>(stream.t_end - stream.t_start);
    const int64_t hw = static_cast<int64_t>(stream.height) * stream.width;
    for (const Event& e : stream.events) {
        const int64_t px = static_cast<int64_t>(e.y) * stream.width + e.x;
        if (bins == 1) {
            g.data[px] += e.p;
            continue;
        }
        const real tau = static_cast<real>(e.t - stream.t_start) / span * (bins - 1);
        int b0 = static_cast<int>(std::floor(tau));
        if (b0 >= bins - 1) b0 = bins - 2;  // tau == bins-1 lands fully in the last bin
        const real w1 = tau - b0;
        g.data[b0 * hw + px] += e.p * (1 - w1);
        g.data[(b0 + 1) * hw + px] += e.p * w1;
    }
    return g;
}

EventStream simulate_events(const std::vector<IntensityFrame>& frames,
                            const std::vector<uint64_t>& timestamps, const EventSimConfig& cfg) {
    if (frames.size() < 2) throw std::invalid_argument("simulate_events: need >= 2 frames");
    if (frames.size() != timestamps.size())
        throw std::invalid_argument("simulate_events: frame/timestamp count mismatch");
    if (cfg.threshold_c <= 0) throw std::invalid_argument("simulate_events: threshold_c <= 0");
    if (cfg.log_eps <= 0) throw std::invalid_argument("simulate_events: log_eps <= 0");
    const int H = frames[0].height(), W = frames[0].width();
    for (size_t i = 0; i < frames.size(); ++i) {
        if (frames[i].height() != H || frames[i].width() != W)
            throw std::invalid_argument("simulate_events: mismatched frame dims");
        if (i > 0 && timestamps[i] <= timestamps[i - 1])
            throw std::invalid_argument("simulate_events: timestamps not strictly increasing");
    }

    EventStream out;
    out.width = W;
    out.height = H;
    out.t_start = timestamps.front();
    out.t_end = timestamps.back();

    const real c = cfg.threshold_c;
    std::vector<Event> evs;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const int64_t px = static_cast<int64_t>(y) * W + x;
            real ref = std::log(frames[0].data[px] + cfg.log_eps);
            uint64_t last_t = 0;
            bool fired = false;
            for (size_t f = 1; f < frames.size(); ++f) {
                const real la = std::log(frames[f - 1].data[px] + cfg.log_eps);
                const real lb = std::log(frames[f].data[px] + cfg.log_eps);
                const real d = lb - la;
                if (d == 0) continue;
                const real ta = static_cast<real>(timestamps[f - 1]);
                const real tb = static_cast<real>(timestamps[f]);
                const int8_t pol = d > 0 ? int8_t(1) : int8_t(-1);
                while (true) {
                    const real thr = ref + pol * c;
                    if (pol > 0 ? (lb < thr) : (lb > thr)) break;
                    const real frac = (thr - la) / d;
                    uint64_t te = static_cast<uint64_t>(std::llround(ta + frac * (tb - ta)));
                    if (te < timestamps[f - 1]) te = timestamps[f - 1];
                    if (te > timestamps[f]) te = timestamps[f];
                    ref = thr;
                    if (fired && cfg.refractory_us > 0 && te < last_t + cfg.refractory_us)
                        continue;  // suppressed; reference still advances
                    evs.push_back(Event{te, static_cast<uint16_t>(x), static_cast<uint16_t>(y), pol});
                    last_t = te;
                    fired = true;
                }
            }
        }
    }
    std::stable_sort(evs.begin(), evs.end(),
                     [](const Event& a, const Event& b) { return a.t < b.t; });
    out.events = std::move(evs);
    return out;
}

IntensityFrame synthesize_blur(const std::vector<IntensityFrame>& frames) {
    if (frames.empty()) throw std::invalid_argument("synthesize_blur: empty sequence");
    const int H = frames[0].height(), W = frames[0].width();
    IntensityFrame out;
    out.data = Tensor({H, W});
    for (const IntensityFrame& f : frames) {
        if (f.height() != H || f.width() != W)
            throw std::invalid_argument("synthesize_blur: mismatched dims");
        for (int64_t i = 0; i < out.data.numel(); ++i) out.data[i] += f.data[i];
    }
    const real inv = real(1) / static_cast<real>(frames.size());
    for (int64_t i = 0; i < out.data.numel(); ++i) out.data[i] *= inv;
    return out;
}

std::vector<uint64_t> latent_timestamps(uint64_t t0, uint64_t t1, int m) {
    std::vector<uint64_t> ts(static_cast<size_t>(m));
    if (m == 1) {
        ts[0] = t0 + (t1 - t0) / 2;
        return ts;
    }
    const real span = static_cast<real>(t1 - t0);
    for (int k = 0; k < m; ++k)
        ts[static_cast<size_t>(k)] =
            t0 + static_cast<uint64_t>(std::llround(span * k / (m - 1)));
    return ts;
}

std::vector<IntensityFrame> edi_deblur(const IntensityFrame& blurry, const EventStream& stream,
                                       real c, int m) {
    if (c <= 0) throw std::invalid_argument("edi_deblur: threshold must be > 0");
    if (m < 1) throw std::invalid_argument("edi_deblur: m must be >= 1");
    stream.validate();
    if (blurry.height() != stream.height || blurry.width() != stream.width)
        throw std::invalid_argument("edi_deblur: dim mismatch");
    const int H = stream.height, W = stream.width;
    const real T = static_cast<real>(stream.t_end - stream.t_start);

    // per-pixel event lists (already time ordered within the stream)
    std::vector<std::vector<std::pair<uint64_t, int>>> per_px(
        static_cast<size_t>(H) * static_cast<size_t>(W));
    for (const Event& e : stream.events)
        per_px[static_cast<size_t>(e.y) * W + e.x].emplace_back(e.t, e.p);

    const std::vector<uint64_t> fts = latent_timestamps(stream.t_start, stream.t_end, m);
    std::vector<IntensityFrame> out(static_cast<size_t>(m));
    for (auto& f : out) f.data = Tensor({H, W});

    for (int64_t px = 0; px < static_cast<int64_t>(H) * W; ++px) {
        const auto& evs = per_px[static_cast<size_t>(px)];
        // integral of exp(c*phi(t)) over the exposure, phi piecewise constant
        real integral = 0;
        {
            real phi = 0;
            uint64_t seg_start = stream.t_start;
            for (const auto& [t, p] : evs) {
                integral += std::exp(c * phi) * static_cast<real>(t - seg_start);
                phi += p;
                seg_start = t;
            }
            integral += std::exp(c * phi) * static_cast<real>(stream.t_end - seg_start);
        }
        for (int k = 0; k < m; ++k) {
            real phi_f = 0;
            for (const auto& [t, p] : evs) {
                if (t > fts[static_cast<size_t>(k)]) break;
                phi_f += p;
            }
            out[static_cast<size_t>(k)].data[px] =
                blurry.data[px] * T * std::exp(c * phi_f) / integral;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// stev file format: little-endian header (magic "STEV1\0", width u16,
// height u16, t_start u64, t_end u64) followed by packed 13-byte records
// (t u64, x u16, y u16, p i8). A JSON sidecar carries counts and config.
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[6] = {'S', 'T', 'E', 'V', '1', '\0'};

template <typename T>
void put_le(std::string& buf, T v) {
    for (size_t i = 0; i < sizeof(T); ++i)
        buf.push_back(static_cast<char>((static_cast<uint64_t>(v) >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const char* p) {
    uint64_t v = 0;
    for (size_t i = 0; i < sizeof(T); ++i)
        v |= static_cast<uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return static_cast<T>(v);
}

}  // namespace

void write_stev(const std::string& path, const EventStream& s) {
    s.validate();
    std::string buf;
    buf.reserve(26 + s.events.size() * 13);
    buf.append(kMagic, 6);
    put_le<uint16_t>(buf, static_cast<uint16_t>(s.width));
    put_le<uint16_t>(buf, static_cast<uint16_t>(s.height));
    put_le<uint64_t>(buf, s.t_start);
    put_le<uint64_t>(buf, s.t_end);
    for (const Event& e : s.events) {
        put_le<uint64_t>(buf, e.t);
        put_le<uint16_t>(buf, e.x);
        put_le<uint16_t>(buf, e.y);
        buf.push_back(static_cast<char>(e.p));
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open for write: " + path);
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));

    nlohmann::json side;
    side["n_events"] = s.events.size();
    int64_t pos = 0, neg = 0;
    for (const Event& e : s.events) (e.p > 0 ? pos : neg)++;
    side["n_positive"] = pos;
    side["n_negative"] = neg;
    side["width"] = s.width;
    side["height"] = s.height;
    side["t_start"] = s.t_start;
    side["t_end"] = s.t_end;
    std::ofstream js(path + ".json");
    js << side.dump(2) << "\n";
}

EventStream read_stev(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open: " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (buf.size() < 26 || std::memcmp(buf.data(), kMagic, 6) != 0)
        throw FormatError("not a stev file: " + path);
    EventStream s;
    s.width = get_le<uint16_t>(buf.data() + 6);
    s.height = get_le<uint16_t>(buf.data() + 8);
    s.t_start = get_le<uint64_t>(buf.data() + 10);
    s.t_end = get_le<uint64_t>(buf.data() + 18);
    const size_t payload = buf.size() - 26;
    if (payload % 13 != 0) throw FormatError("truncated stev records: " + path);
    const size_t n = payload / 13;
    s.events.resize(n);
    const char* p = buf.data() + 26;
    for (size_t i = 0; i < n; ++i, p += 13) {
        s.events[i].t = get_le<uint64_t>(p);
        s.events[i].x = get_le<uint16_t>(p + 8);
        s.events[i].y = get_le<uint16_t>(p + 10);
        s.events[i].p = static_cast<int8_t>(p[12]);
    }
    s.validate();
    return s;
}

}  // namespace sted::events
