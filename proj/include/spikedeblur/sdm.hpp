#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "spikedeblur/blur_model.hpp"
#include "spikedeblur/image.hpp"
#include "spikedeblur/spike_stream.hpp"

namespace spikedeblur {

/// Evenly spaced output timestamps inside an exposure of `len` frames:
/// t_m = start + round((m - 0.5) * len / m_total), clamped into the window.
/// Both synthesis (ground-truth frame selection) and reconstruction use this
/// rule, so evaluation is time-aligned by construction.
inline std::vector<int> default_timestamps(int start, int len, int m_total) {
    if (len < 1 || m_total < 1) throw std::invalid_argument("default_timestamps: bad arguments");
    std::vector<int> ts(static_cast<std::size_t>(m_total));
    for (int m = 1; m <= m_total; ++m) {
        const long t = std::lround((m - 0.5) * static_cast<double>(len) / m_total);
        ts[static_cast<std::size_t>(m - 1)] =
            start + static_cast<int>(std::clamp<long>(t, 0, len - 1));
    }
    return ts;
}

/// Timestamps at the centers of m_total equal tiles of the exposure. With
/// short_len = len / m_total, the centered short windows placed at these
/// timestamps partition the exposure exactly.
inline std::vector<int> tiling_timestamps(int start, int len, int m_total) {
    if (m_total < 1 || len % m_total != 0)
        throw std::invalid_argument("tiling_timestamps: exposure length must be divisible by m");
    const int tile = len / m_total;
    std::vector<int> ts(static_cast<std::size_t>(m_total));
    for (int m = 0; m < m_total; ++m) ts[static_cast<std::size_t>(m)] = start + m * tile + tile / 2;
    return ts;
}

/// Exposure geometry for reconstruction: the full exposure window over the
/// spike stream (K frames, duration T = K*dt), the virtual short-exposure
/// length K' (duration T' = K'*dt), and the M output timestamps (absolute
/// frame indices inside the exposure).
struct ExposureSpec {
    WindowSpec exposure_window;
    int short_len = 1;            // K'
    int num_outputs = 1;          // M
    std::vector<int> timestamps;  // size M

    /// short_len == 0 picks the default K' = K/8 rounded to the nearest odd.
    static ExposureSpec make_default(const WindowSpec& exposure, int short_len = 0,
                                     int num_outputs = 7) {
        ExposureSpec spec;
        spec.exposure_window = exposure;
        spec.short_len = short_len > 0 ? short_len : default_short_len(exposure.len_frames);
        spec.num_outputs = num_outputs;
        spec.timestamps = default_timestamps(exposure.start_frame, exposure.len_frames, num_outputs);
        return spec;
    }

    /// M disjoint short windows tiling the exposure (requires M*K' = K).
    static ExposureSpec make_tiling(const WindowSpec& exposure, int num_outputs) {
        ExposureSpec spec;
        spec.exposure_window = exposure;
        spec.num_outputs = num_outputs;
        spec.timestamps = tiling_timestamps(exposure.start_frame, exposure.len_frames, num_outputs);
        spec.short_len = exposure.len_frames / num_outputs;
        return spec;
    }

    static int default_short_len(int exposure_len) {
        const int k = 2 * static_cast<int>(std::floor(exposure_len / 16.0)) + 1;  // nearest odd to K/8
        return std::clamp(k, 1, exposure_len);
    }

    void validate(const SpikeStream& stream, const char* where) const {
        exposure_window.validate(stream, where);
        if (short_len < 1 || short_len > exposure_window.len_frames)
            throw std::invalid_argument(std::string(where) + ": short_len out of range");
        if (num_outputs < 1 || timestamps.size() != static_cast<std::size_t>(num_outputs))
            throw std::invalid_argument(std::string(where) + ": timestamps/num_outputs mismatch");
        for (int t : timestamps)
            if (t < exposure_window.start_frame || t >= exposure_window.end_frame())
                throw std::invalid_argument(std::string(where) + ": timestamp outside exposure");
    }

    /// Short window centered at t, shifted (never truncated) to stay inside
    /// the exposure so T' is constant: truncation would silently rescale
    /// brightness near the exposure edges.
    WindowSpec place_short_window(int t) const {
        const int lo = exposure_window.start_frame;
        const int hi = exposure_window.end_frame() - short_len;
        const int start = std::clamp(t - short_len / 2, lo, hi);
        return {start, short_len};
    }
};

struct ReconstructionConfig {
    bool clamp_output = true;
    double count_eps = 1e-12;     // guards N_T' / max(N_T, eps); N_T = 0 still yields 0
    int upsample_factor = 4;      // blurry resolution / spike resolution
    bool upsample_counts = false; // interpolate the count maps instead of the ratio map

    void validate() const {
        if (upsample_factor < 1)
            throw std::invalid_argument("reconstruction: upsample_factor must be >= 1");
        if (!(count_eps > 0.0)) throw std::invalid_argument("reconstruction: count_eps must be > 0");
    }
};

/// Bilinear upsampling with half-pixel sample centers: output sample i reads
/// source coordinate (i + 0.5)/factor - 0.5, edge values replicated beyond the
/// borders. factor == 1 is the identity.
template <typename T>
std::vector<T> upsample_bilinear(const std::vector<T>& src, int width, int height, int factor) {
    if (factor < 1) throw std::invalid_argument("upsample_bilinear: factor must be >= 1");
    if (src.size() != static_cast<std::size_t>(width) * height)
        throw std::invalid_argument("upsample_bilinear: size mismatch");
    if (factor == 1) return src;

    const int ow = width * factor;
    const int oh = height * factor;
    std::vector<T> out(static_cast<std::size_t>(ow) * oh);

    std::vector<int> x0(ow), x1(ow);
    std::vector<T> fx(ow);
    for (int x = 0; x < ow; ++x) {
        const double sx = (x + 0.5) / factor - 0.5;
        const double fl = std::floor(sx);
        x0[x] = std::clamp(static_cast<int>(fl), 0, width - 1);
        x1[x] = std::clamp(static_cast<int>(fl) + 1, 0, width - 1);
        fx[x] = static_cast<T>(sx - fl);
    }
    for (int y = 0; y < oh; ++y) {
        const double sy = (y + 0.5) / factor - 0.5;
        const double fl = std::floor(sy);
        const int y0 = std::clamp(static_cast<int>(fl), 0, height - 1);
        const int y1 = std::clamp(static_cast<int>(fl) + 1, 0, height - 1);
        const T fy = static_cast<T>(sy - fl);
        const T* row0 = src.data() + static_cast<std::size_t>(y0) * width;
        const T* row1 = src.data() + static_cast<std::size_t>(y1) * width;
        T* dst = out.data() + static_cast<std::size_t>(y) * ow;
        for (int x = 0; x < ow; ++x) {
            const T top = row0[x0[x]] + fx[x] * (row0[x1[x]] - row0[x0[x]]);
            const T bot = row1[x0[x]] + fx[x] * (row1[x1[x]] - row1[x0[x]]);
            dst[x] = top + fy * (bot - top);
        }
    }
    return out;
}

inline Image upsample_bilinear(const Image& image, int factor) {
    Image out(image.width * factor, image.height * factor, image.channels);
    for (int c = 0; c < image.channels; ++c) {
        std::vector<double> plane(image.plane(c), image.plane(c) + image.plane_size());
        std::vector<double> up = upsample_bilinear(plane, image.width, image.height, factor);
        std::copy(up.begin(), up.end(), out.plane(c));
    }
    return out;
}

/// Windowed spike average: E = C * N / T' per pixel. Output is grayscale and
/// unclamped (it may exceed 1 where the count saturates the window).
inline Image tfp_reconstruct(const SpikeStream& stream, const WindowSpec& window, double threshold) {
    if (!(threshold > 0.0)) throw std::invalid_argument("tfp_reconstruct: threshold must be > 0");
    const SpikeCountMap counts = accumulate_window(stream, window);
    Image out(stream.width, stream.height, 1);
    const double scale = threshold / window.duration(stream);
    for (std::size_t p = 0; p < out.plane_size(); ++p)
        out.data[p] = scale * static_cast<double>(counts.counts[p]);
    return out;
}

namespace detail {

/// Per-pixel reconstruction multiplier at blurry resolution:
/// R = (N_T' / N_T) * (T / T'), zero where N_T = 0, bilinearly upsampled.
inline std::vector<double> ratio_map(const SpikeCountMap& n_full, const SpikeCountMap& n_short,
                                     int exposure_len, int short_len,
                                     const ReconstructionConfig& cfg) {
    const std::size_t n = n_full.counts.size();
    const double t_ratio = static_cast<double>(exposure_len) / short_len;  // T/T' (dt cancels)

    if (cfg.upsample_counts) {
        // Table-3-style alternative: interpolate the two count maps, then divide.
        std::vector<double> full(n), part(n);
        for (std::size_t p = 0; p < n; ++p) {
            full[p] = static_cast<double>(n_full.counts[p]);
            part[p] = static_cast<double>(n_short.counts[p]);
        }
        std::vector<double> full_up =
            upsample_bilinear(full, n_full.width, n_full.height, cfg.upsample_factor);
        std::vector<double> part_up =
            upsample_bilinear(part, n_full.width, n_full.height, cfg.upsample_factor);
        std::vector<double> r(full_up.size());
        for (std::size_t p = 0; p < r.size(); ++p)
            r[p] = full_up[p] == 0.0
                       ? 0.0
                       : part_up[p] / std::max(full_up[p], cfg.count_eps) * t_ratio;
        return r;
    }

    std::vector<double> r(n);
    for (std::size_t p = 0; p < n; ++p)
        r[p] = n_full.counts[p] == 0
                   ? 0.0
                   : static_cast<double>(n_short.counts[p]) /
                         std::max(static_cast<double>(n_full.counts[p]), cfg.count_eps) * t_ratio;
    return upsample_bilinear(r, n_full.width, n_full.height, cfg.upsample_factor);
}

inline Image apply_ratio(const Image& blurry, const std::vector<double>& ratio,
                         const ReconstructionConfig& cfg) {
    Image out(blurry.width, blurry.height, blurry.channels);
    for (int c = 0; c < blurry.channels; ++c) {
        const double* src = blurry.plane(c);
        double* dst = out.plane(c);
        for (std::size_t p = 0; p < blurry.plane_size(); ++p) dst[p] = src[p] * ratio[p];
    }
    if (cfg.clamp_output) out.clamp01();
    return out;
}

inline void check_resolution(const Image& blurry, const SpikeStream& stream,
                             const ReconstructionConfig& cfg, const char* where) {
    if (blurry.width != stream.width * cfg.upsample_factor ||
        blurry.height != stream.height * cfg.upsample_factor)
        throw std::invalid_argument(std::string(where) +
                                    ": blurry size must equal spike size times upsample_factor");
}

}  // namespace detail

/// Recover the latent frame at t from the blurry input and the spike stream:
/// L(t) = B * (N_T' / N_T) * (T / T') per channel, where N_T' is counted over
/// the short window centered (shifted at the edges) at t. The unknown
/// threshold cancels in the ratio. Pixels that never spiked over the exposure
/// reconstruct to 0.
inline Image sdm_reconstruct_frame(const Image& blurry, const SpikeStream& stream,
                                   const ExposureSpec& exposure, int t_index,
                                   const ReconstructionConfig& cfg = {}) {
    cfg.validate();
    exposure.validate(stream, "sdm_reconstruct_frame");
    detail::check_resolution(blurry, stream, cfg, "sdm_reconstruct_frame");
    if (t_index < exposure.exposure_window.start_frame ||
        t_index >= exposure.exposure_window.end_frame())
        throw std::invalid_argument("sdm_reconstruct_frame: t_index outside exposure");

    const SpikeCountMap n_full = accumulate_window(stream, exposure.exposure_window);
    const SpikeCountMap n_short = accumulate_window(stream, exposure.place_short_window(t_index));
    const std::vector<double> ratio = detail::ratio_map(
        n_full, n_short, exposure.exposure_window.len_frames, exposure.short_len, cfg);
    return detail::apply_ratio(blurry, ratio, cfg);
}

/// Reconstruct the M-frame sequence at the exposure's timestamps, in
/// timestamp order. The full-exposure counts are computed once and shared.
inline FrameSequence sdm_reconstruct_sequence(const Image& blurry, const SpikeStream& stream,
                                              const ExposureSpec& exposure,
                                              const ReconstructionConfig& cfg = {}) {
    cfg.validate();
    exposure.validate(stream, "sdm_reconstruct_sequence");
    detail::check_resolution(blurry, stream, cfg, "sdm_reconstruct_sequence");

    const SpikeCountMap n_full = accumulate_window(stream, exposure.exposure_window);
    FrameSequence seq;
    seq.frame_duration = stream.frame_duration;
    seq.frames.reserve(exposure.timestamps.size());
    for (int t : exposure.timestamps) {
        const SpikeCountMap n_short = accumulate_window(stream, exposure.place_short_window(t));
        const std::vector<double> ratio = detail::ratio_map(
            n_full, n_short, exposure.exposure_window.len_frames, exposure.short_len, cfg);
        seq.frames.push_back(detail::apply_ratio(blurry, ratio, cfg));
    }
    return seq;
}

/// Re-synthesized blurry image: the arithmetic mean of a reconstructed
/// sequence. With disjoint short windows tiling the exposure this reproduces
/// the blurry input exactly, which is the model's self-consistency check.
inline Image reblur(const FrameSequence& sequence) {
    return synthesize_blur(sequence, 0, sequence.size());
}

}  // namespace spikedeblur
