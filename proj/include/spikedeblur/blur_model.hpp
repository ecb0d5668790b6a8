#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "spikedeblur/image.hpp"

namespace spikedeblur {

/// Weights of the RGB-to-gray weighted sum. Must be non-negative and sum to 1.
/// The defaults are the standard luma convention; reconstruction itself is
/// weight-free, so the choice only affects spike simulation input and the
/// channel-ratio diagnostics.
struct GrayscaleWeights {
    double w_r = 0.299;
    double w_gre = 0.587;
    double w_b = 0.114;

    void validate() const {
        if (w_r < 0.0 || w_gre < 0.0 || w_b < 0.0)
            throw std::invalid_argument("grayscale_weights: weights must be >= 0");
        if (std::abs(w_r + w_gre + w_b - 1.0) > 1e-12)
            throw std::invalid_argument("grayscale_weights: weights must sum to 1");
    }
};

/// Blur formation: the exact arithmetic mean of frames [start, start+count),
/// per channel. Models an exposure as the average of the latent frames it
/// spans.
inline Image synthesize_blur(const FrameSequence& frames, std::size_t start, std::size_t count) {
    frames.validate("synthesize_blur");
    if (count < 1) throw std::invalid_argument("synthesize_blur: empty range");
    if (start + count > frames.size())
        throw std::invalid_argument("synthesize_blur: range out of bounds");

    const Image& first = frames[start];
    Image out(first.width, first.height, first.channels, 0.0);
    for (std::size_t i = start; i < start + count; ++i) {
        const Image& f = frames[i];
        for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] += f.data[k];
    }
    const double inv = 1.0 / static_cast<double>(count);
    for (double& v : out.data) v *= inv;
    return out;
}

/// Weighted RGB-to-gray sum, linear in the input.
inline Image to_grayscale(const Image& image, const GrayscaleWeights& weights = {}) {
    if (image.channels != 3) throw std::invalid_argument("to_grayscale: expects a 3-channel image");
    weights.validate();
    Image out(image.width, image.height, 1);
    const double* r = image.plane(0);
    const double* g = image.plane(1);
    const double* b = image.plane(2);
    for (std::size_t p = 0; p < out.plane_size(); ++p)
        out.data[p] = weights.w_r * r[p] + weights.w_gre * g[p] + weights.w_b * b[p];
    return out;
}

/// Reduce resolution by an integer factor; each output pixel is the exact
/// mean of its factor x factor block.
inline Image downsample_area(const Image& image, int factor) {
    if (factor < 1) throw std::invalid_argument("downsample_area: factor must be >= 1");
    if (image.width % factor != 0 || image.height % factor != 0)
        throw std::invalid_argument("downsample_area: dimensions not divisible by factor");
    if (factor == 1) return image;

    const int ow = image.width / factor;
    const int oh = image.height / factor;
    Image out(ow, oh, image.channels);
    const double inv = 1.0 / (static_cast<double>(factor) * factor);
    for (int c = 0; c < image.channels; ++c) {
        const double* src = image.plane(c);
        double* dst = out.plane(c);
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                double sum = 0.0;
                for (int dy = 0; dy < factor; ++dy) {
                    const double* row = src + static_cast<std::size_t>(y * factor + dy) * image.width +
                                        static_cast<std::size_t>(x) * factor;
                    for (int dx = 0; dx < factor; ++dx) sum += row[dx];
                }
                dst[static_cast<std::size_t>(y) * ow + x] = sum * inv;
            }
        }
    }
    return out;
}

/// Diagnostics for the identical-color postulate: if the blurry input and a
/// short-exposure image share per-pixel channel proportions, then the
/// gray/channel ratios alpha_c agree between the two. This report quantifies
/// how far a given pair deviates from that assumption.
///
/// Ratios divide by channel values, so pixels where any of the six channel
/// samples is <= eps are masked out of the statistics.
struct ChannelRatioReport {
    Image k1_map;  // blurry red/green, 0 outside the valid mask
    Image k2_map;  // blurry red/blue
    std::array<Image, 3> alpha_blurry;  // gray/channel of the blurry input
    std::array<Image, 3> alpha_short;   // gray/channel of the short exposure
    Image deviation_map;                // max over channels of |alpha_B - alpha_E|
    Image valid_mask;                   // 1 where all channel samples exceed eps
    double max_abs_deviation = 0.0;
};

inline ChannelRatioReport channel_ratio_consistency(const Image& blurry,
                                                    const Image& short_exposure, double eps = 1e-3,
                                                    const GrayscaleWeights& weights = {}) {
    if (blurry.channels != 3 || short_exposure.channels != 3)
        throw std::invalid_argument("channel_ratio_consistency: expects 3-channel images");
    require_same_shape(blurry, short_exposure, "channel_ratio_consistency");
    if (!(eps > 0.0)) throw std::invalid_argument("channel_ratio_consistency: eps must be > 0");
    weights.validate();

    const int w = blurry.width;
    const int h = blurry.height;
    ChannelRatioReport rep;
    rep.k1_map = Image(w, h, 1);
    rep.k2_map = Image(w, h, 1);
    for (int c = 0; c < 3; ++c) {
        rep.alpha_blurry[c] = Image(w, h, 1);
        rep.alpha_short[c] = Image(w, h, 1);
    }
    rep.deviation_map = Image(w, h, 1);
    rep.valid_mask = Image(w, h, 1);

    const Image gray_b = to_grayscale(blurry, weights);
    const Image gray_e = to_grayscale(short_exposure, weights);

    for (std::size_t p = 0; p < rep.valid_mask.plane_size(); ++p) {
        bool valid = true;
        for (int c = 0; c < 3; ++c)
            valid = valid && blurry.plane(c)[p] > eps && short_exposure.plane(c)[p] > eps;
        if (!valid) continue;

        rep.valid_mask.data[p] = 1.0;
        rep.k1_map.data[p] = blurry.plane(0)[p] / blurry.plane(1)[p];
        rep.k2_map.data[p] = blurry.plane(0)[p] / blurry.plane(2)[p];

        double dev = 0.0;
        for (int c = 0; c < 3; ++c) {
            const double ab = gray_b.data[p] / blurry.plane(c)[p];
            const double ae = gray_e.data[p] / short_exposure.plane(c)[p];
            rep.alpha_blurry[c].data[p] = ab;
            rep.alpha_short[c].data[p] = ae;
            dev = std::max(dev, std::abs(ab - ae));
        }
        rep.deviation_map.data[p] = dev;
        rep.max_abs_deviation = std::max(rep.max_abs_deviation, dev);
    }
    return rep;
}

}  // namespace spikedeblur
