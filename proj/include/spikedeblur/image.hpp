#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace spikedeblur {

/// Multi-channel float image. Data is planar: channel-major, row-major within
/// each plane, so plane c occupies data[c*width*height .. (c+1)*width*height).
/// Values are expected in [0,1] unless a producer explicitly emits unclamped
/// output (TFP and pre-clamp reconstructions may exceed 1).
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c) {
        if (w < 1 || h < 1 || (c != 1 && c != 3))
            throw std::invalid_argument("image: bad dimensions " + std::to_string(w) + "x" +
                                        std::to_string(h) + "x" + std::to_string(c));
        data.assign(static_cast<std::size_t>(w) * h * c, fill);
    }

    std::size_t plane_size() const { return static_cast<std::size_t>(width) * height; }
    std::size_t pixel_count() const { return plane_size(); }

    double& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }

    double* plane(int c) { return data.data() + static_cast<std::size_t>(c) * plane_size(); }
    const double* plane(int c) const {
        return data.data() + static_cast<std::size_t>(c) * plane_size();
    }

    bool same_shape(const Image& other) const {
        return width == other.width && height == other.height && channels == other.channels;
    }

    void clamp01() {
        for (double& v : data) v = std::clamp(v, 0.0, 1.0);
    }
};

inline void require_same_shape(const Image& a, const Image& b, const char* where) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(where) + ": shape mismatch");
}

inline void require_finite(const Image& img, const char* where) {
    for (double v : img.data)
        if (!std::isfinite(v)) throw std::invalid_argument(std::string(where) + ": non-finite value");
}

/// Ordered frames of identical shape sampled at a fixed interval.
/// Frame i covers [i*frame_duration, (i+1)*frame_duration); its nominal
/// timestamp is the frame center (i + 0.5)*frame_duration.
struct FrameSequence {
    std::vector<Image> frames;
    double frame_duration = 1.0;

    std::size_t size() const { return frames.size(); }
    bool empty() const { return frames.empty(); }

    const Image& operator[](std::size_t i) const { return frames[i]; }
    Image& operator[](std::size_t i) { return frames[i]; }

    auto begin() const { return frames.begin(); }
    auto end() const { return frames.end(); }
    auto begin() { return frames.begin(); }
    auto end() { return frames.end(); }

    void validate(const char* where) const {
        if (frames.empty()) throw std::invalid_argument(std::string(where) + ": empty sequence");
        if (!(frame_duration > 0.0))
            throw std::invalid_argument(std::string(where) + ": frame_duration must be > 0");
        for (const Image& f : frames)
            if (!f.same_shape(frames.front()))
                throw std::invalid_argument(std::string(where) + ": non-uniform frame shapes");
    }
};

}  // namespace spikedeblur
