#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace spikedeblur {

/// Bit-packed binary spike tensor of shape num_frames x height x width.
///
/// Layout: frame-major, row-major within a frame, least-significant-bit first
/// within each byte. Every frame is padded to a whole byte
/// (bytes_per_frame = ceil(width*height/8)); padding bits are zero. This makes
/// each frame a contiguous, independently addressable slab.
///
/// Frame i spans [start_time + i*frame_duration, start_time + (i+1)*frame_duration);
/// its nominal timestamp is the frame center start_time + (i + 0.5)*frame_duration.
///
/// Streams are treated as immutable after construction and are safe to share
/// across threads.
struct SpikeStream {
    int width = 0;
    int height = 0;
    int num_frames = 0;
    double frame_duration = 1.0;
    double start_time = 0.0;
    std::vector<std::uint8_t> data;

    std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
    std::size_t bytes_per_frame() const { return (pixels() + 7) / 8; }

    const std::uint8_t* frame(int i) const { return data.data() + bytes_per_frame() * i; }
    std::uint8_t* frame(int i) { return data.data() + bytes_per_frame() * i; }

    int get_bit(int frame_index, int y, int x) const {
        const std::size_t p = static_cast<std::size_t>(y) * width + x;
        return (frame(frame_index)[p >> 3] >> (p & 7)) & 1;
    }

    void set_bit(int frame_index, int y, int x, int value) {
        const std::size_t p = static_cast<std::size_t>(y) * width + x;
        std::uint8_t& byte = frame(frame_index)[p >> 3];
        const std::uint8_t mask = static_cast<std::uint8_t>(1u << (p & 7));
        byte = value ? static_cast<std::uint8_t>(byte | mask)
                     : static_cast<std::uint8_t>(byte & ~mask);
    }

    double frame_center_time(int i) const { return start_time + (i + 0.5) * frame_duration; }

    static SpikeStream zeros(int width, int height, int num_frames, double frame_duration = 1.0,
                             double start_time = 0.0) {
        if (width < 1 || height < 1 || num_frames < 1)
            throw std::invalid_argument("spike_stream: dimensions must be >= 1");
        if (!(frame_duration > 0.0))
            throw std::invalid_argument("spike_stream: frame_duration must be > 0");
        SpikeStream s;
        s.width = width;
        s.height = height;
        s.num_frames = num_frames;
        s.frame_duration = frame_duration;
        s.start_time = start_time;
        s.data.assign(s.bytes_per_frame() * num_frames, 0);
        return s;
    }
};

/// Half-open frame range [start_frame, start_frame + len_frames) into a stream.
struct WindowSpec {
    int start_frame = 0;
    int len_frames = 1;

    int end_frame() const { return start_frame + len_frames; }
    double duration(const SpikeStream& s) const { return len_frames * s.frame_duration; }

    void validate(const SpikeStream& s, const char* where) const {
        if (start_frame < 0 || len_frames < 1 ||
            static_cast<long long>(start_frame) + len_frames > s.num_frames)
            throw std::invalid_argument(std::string(where) + ": window [" +
                                        std::to_string(start_frame) + ", " +
                                        std::to_string(static_cast<long long>(start_frame) +
                                                       len_frames) +
                                        ") out of range for " + std::to_string(s.num_frames) +
                                        " frames");
    }
};

/// Per-pixel spike counts over a window. 32-bit: window lengths can exceed 255.
struct SpikeCountMap {
    int width = 0;
    int height = 0;
    std::vector<std::uint32_t> counts;
    WindowSpec window;

    std::uint32_t at(int y, int x) const {
        return counts[static_cast<std::size_t>(y) * width + x];
    }
};

namespace detail {

// spread_bits[b] has byte lane i equal to bit i of b.
inline constexpr std::array<std::uint64_t, 256> make_spread_table() {
    std::array<std::uint64_t, 256> t{};
    for (int b = 0; b < 256; ++b) {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            if (b & (1 << i)) v |= 1ULL << (8 * i);
        t[static_cast<std::size_t>(b)] = v;
    }
    return t;
}

inline constexpr std::array<std::uint64_t, 256> spread_bits = make_spread_table();

}  // namespace detail

/// Pack dense binary masks (row-major width*height, values 0/1) into a stream.
inline SpikeStream from_dense(const std::vector<std::vector<std::uint8_t>>& frames, int width,
                              int height, double frame_duration = 1.0, double start_time = 0.0) {
    if (frames.empty()) throw std::invalid_argument("from_dense: empty input");
    SpikeStream s = SpikeStream::zeros(width, height, static_cast<int>(frames.size()),
                                       frame_duration, start_time);
    const std::size_t n = s.pixels();
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const auto& mask = frames[i];
        if (mask.size() != n) throw std::invalid_argument("from_dense: mask shape mismatch");
        std::uint8_t* out = s.frame(static_cast<int>(i));
        for (std::size_t p = 0; p < n; ++p) {
            if (mask[p] > 1) throw std::invalid_argument("from_dense: values must be 0 or 1");
            out[p >> 3] = static_cast<std::uint8_t>(out[p >> 3] | (mask[p] << (p & 7)));
        }
    }
    return s;
}

/// Per-pixel spike counts over a window: counts[p] = sum of S[i][p] for i in
/// the window. Runs on packed bytes via bit-sliced lane counters (8 pixels per
/// 64-bit accumulator, flushed before the 8-bit lanes can overflow) instead of
/// per-bit loops.
inline SpikeCountMap accumulate_window(const SpikeStream& stream, const WindowSpec& window) {
    window.validate(stream, "accumulate_window");

    const std::size_t bpf = stream.bytes_per_frame();
    const std::size_t n = stream.pixels();

    SpikeCountMap map;
    map.width = stream.width;
    map.height = stream.height;
    map.window = window;
    map.counts.assign(n, 0);

    std::vector<std::uint64_t> lanes(bpf, 0);
    const auto flush = [&] {
        for (std::size_t j = 0; j < bpf; ++j) {
            const std::uint64_t acc = lanes[j];
            if (!acc) continue;
            const std::size_t base = j * 8;
            const std::size_t hi = std::min<std::size_t>(base + 8, n);
            for (std::size_t p = base; p < hi; ++p)
                map.counts[p] += static_cast<std::uint32_t>((acc >> (8 * (p - base))) & 0xff);
            lanes[j] = 0;
        }
    };

    int pending = 0;
    for (int i = window.start_frame; i < window.end_frame(); ++i) {
        const std::uint8_t* f = stream.frame(i);
        for (std::size_t j = 0; j < bpf; ++j) lanes[j] += detail::spread_bits[f[j]];
        if (++pending == 255) {
            flush();
            pending = 0;
        }
    }
    if (pending) flush();
    return map;
}

// ---------------------------------------------------------------------------
// SPK1 container
//
// magic "SPK1", then little-endian: u32 width, u32 height, u32 num_frames,
// f64 frame_duration, f64 start_time, u32 flags (must be 0), followed by
// num_frames * ceil(width*height/8) payload bytes.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

inline double get_f64(const std::uint8_t* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

constexpr std::size_t spk1_header_size = 4 + 4 + 4 + 4 + 8 + 8 + 4;

}  // namespace detail

inline std::vector<std::uint8_t> encode(const SpikeStream& stream) {
    std::vector<std::uint8_t> out;
    out.reserve(detail::spk1_header_size + stream.data.size());
    for (char c : {'S', 'P', 'K', '1'}) out.push_back(static_cast<std::uint8_t>(c));
    detail::put_u32(out, static_cast<std::uint32_t>(stream.width));
    detail::put_u32(out, static_cast<std::uint32_t>(stream.height));
    detail::put_u32(out, static_cast<std::uint32_t>(stream.num_frames));
    detail::put_f64(out, stream.frame_duration);
    detail::put_f64(out, stream.start_time);
    detail::put_u32(out, 0);  // flags
    out.insert(out.end(), stream.data.begin(), stream.data.end());
    return out;
}

inline SpikeStream decode(const std::vector<std::uint8_t>& bytes) {
    using namespace detail;
    if (bytes.size() < spk1_header_size) throw std::runtime_error("spk1: truncated header");
    if (std::memcmp(bytes.data(), "SPK1", 4) != 0) throw std::runtime_error("spk1: bad magic");

    const std::uint8_t* p = bytes.data() + 4;
    const std::uint32_t width = get_u32(p);
    const std::uint32_t height = get_u32(p + 4);
    const std::uint32_t num_frames = get_u32(p + 8);
    const double frame_duration = get_f64(p + 12);
    const double start_time = get_f64(p + 20);
    const std::uint32_t flags = get_u32(p + 28);

    if (width < 1 || height < 1 || num_frames < 1 ||
        width > (1u << 20) || height > (1u << 20) || num_frames > (1u << 28))
        throw std::runtime_error("spk1: inconsistent declared sizes");
    if (flags != 0) throw std::runtime_error("spk1: unsupported flags");
    if (!(frame_duration > 0.0) || !std::isfinite(frame_duration) || !std::isfinite(start_time))
        throw std::runtime_error("spk1: bad temporal metadata");

    const std::size_t bpf = (static_cast<std::size_t>(width) * height + 7) / 8;
    const std::size_t available = bytes.size() - spk1_header_size;
    // frame-count comparison first so the size math cannot overflow
    if (available / bpf < num_frames) throw std::runtime_error("spk1: truncated payload");
    if (available != bpf * num_frames) throw std::runtime_error("spk1: payload size mismatch");

    SpikeStream s;
    s.width = static_cast<int>(width);
    s.height = static_cast<int>(height);
    s.num_frames = static_cast<int>(num_frames);
    s.frame_duration = frame_duration;
    s.start_time = start_time;
    s.data.assign(bytes.begin() + spk1_header_size, bytes.end());

    // Padding bits beyond width*height must be zero in a well-formed stream.
    const std::size_t used = s.pixels();
    if (used % 8 != 0) {
        const std::uint8_t pad_mask = static_cast<std::uint8_t>(0xff << (used % 8));
        for (int i = 0; i < s.num_frames; ++i)
            if (s.frame(i)[bpf - 1] & pad_mask)
                throw std::runtime_error("spk1: nonzero padding bits");
    }
    return s;
}

inline void save_spk1(const std::string& path, const SpikeStream& stream) {
    const std::vector<std::uint8_t> bytes = encode(stream);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("spk1: cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("spk1: write failed: " + path);
}

inline SpikeStream load_spk1(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("spk1: cannot open: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    return decode(bytes);
}

// ---------------------------------------------------------------------------
// Raw (headerless) import for spike-camera dumps
// ---------------------------------------------------------------------------

enum class BitOrder { lsb_first, msb_first };

/// Import a headerless dump. Frames are assumed byte-padded like SPK1 frames;
/// `bit_order` selects how bits were packed within each byte (camera dumps do
/// not declare this, so it is a caller choice). num_frames == 0 infers the
/// frame count from the payload size. Padding bits are cleared on import.
inline SpikeStream import_raw(const std::vector<std::uint8_t>& bytes, int width, int height,
                              int num_frames, BitOrder bit_order, double frame_duration = 1.0,
                              double start_time = 0.0) {
    if (width < 1 || height < 1) throw std::invalid_argument("import_raw: bad dimensions");
    const std::size_t bpf = (static_cast<std::size_t>(width) * height + 7) / 8;
    if (num_frames == 0) {
        if (bytes.empty() || bytes.size() % bpf != 0)
            throw std::runtime_error("import_raw: payload is not a whole number of frames");
        num_frames = static_cast<int>(bytes.size() / bpf);
    }
    if (num_frames < 1) throw std::invalid_argument("import_raw: bad frame count");
    if (bytes.size() != bpf * static_cast<std::size_t>(num_frames))
        throw std::runtime_error("import_raw: payload size does not match declared geometry");

    SpikeStream s = SpikeStream::zeros(width, height, num_frames, frame_duration, start_time);
    if (bit_order == BitOrder::lsb_first) {
        std::copy(bytes.begin(), bytes.end(), s.data.begin());
    } else {
        for (std::size_t i = 0; i < bytes.size(); ++i) {
            std::uint8_t b = bytes[i];
            b = static_cast<std::uint8_t>(((b & 0xf0) >> 4) | ((b & 0x0f) << 4));
            b = static_cast<std::uint8_t>(((b & 0xcc) >> 2) | ((b & 0x33) << 2));
            b = static_cast<std::uint8_t>(((b & 0xaa) >> 1) | ((b & 0x55) << 1));
            s.data[i] = b;
        }
    }
    const std::size_t used = s.pixels();
    if (used % 8 != 0) {
        const std::uint8_t keep = static_cast<std::uint8_t>(0xff >> (8 - used % 8));
        for (int i = 0; i < num_frames; ++i) s.frame(i)[bpf - 1] &= keep;
    }
    return s;
}

inline SpikeStream import_raw_file(const std::string& path, int width, int height, int num_frames,
                                   BitOrder bit_order, double frame_duration = 1.0,
                                   double start_time = 0.0) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("import_raw: cannot open: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    return import_raw(bytes, width, height, num_frames, bit_order, frame_duration, start_time);
}

}  // namespace spikedeblur
