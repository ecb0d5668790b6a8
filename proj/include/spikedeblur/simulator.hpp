#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "spikedeblur/image.hpp"
#include "spikedeblur/rng.hpp"
#include "spikedeblur/spike_stream.hpp"

namespace spikedeblur {

enum class ResetMode {
    reset_to_zero,   // discard the accumulated overshoot on firing
    reset_subtract,  // subtract the threshold, keeping the overshoot
};

enum class InitialAccumulator {
    zeros,
    uniform_random,  // per-pixel uniform in [0, threshold)
};

/// Integrate-and-fire front end configuration. `threshold` is the firing
/// level C; a threshold multiplier setup with unit base threshold means
/// C = multiplier * 1.0. `dark_current` is added per pixel per readout step.
/// `spurious_spike_prob` forces emitted bits to 1 independently per pixel per
/// frame. `temporal_supersample` integrates n substeps per emitted frame.
struct SimulatorConfig {
    double threshold = 1.0;
    ResetMode reset_mode = ResetMode::reset_to_zero;
    double dark_current = 0.0;
    double spurious_spike_prob = 0.0;
    std::uint64_t seed = 0;
    InitialAccumulator initial_accumulator = InitialAccumulator::zeros;
    int temporal_supersample = 1;

    void validate() const {
        if (!(threshold > 0.0)) throw std::invalid_argument("simulator: threshold must be > 0");
        if (dark_current < 0.0) throw std::invalid_argument("simulator: dark_current must be >= 0");
        if (spurious_spike_prob < 0.0 || spurious_spike_prob > 1.0)
            throw std::invalid_argument("simulator: spurious_spike_prob must be in [0,1]");
        if (temporal_supersample < 1)
            throw std::invalid_argument("simulator: temporal_supersample must be >= 1");
    }
};

/// Carry-over state for chained simulation of consecutive video segments.
/// `frame_offset` is the global index of the next emitted frame; it keys the
/// spurious-noise draws so chained calls are bit-identical to one long call.
struct IntegratorState {
    int width = 0;
    int height = 0;
    std::vector<double> accumulator;
    std::int64_t frame_offset = 0;

    bool empty() const { return accumulator.empty(); }
};

struct SimulationResult {
    SpikeStream stream;
    IntegratorState state;
};

namespace detail {

// Stream ids for the counter RNG so distinct draws never collide.
constexpr std::uint64_t rng_stream_init = 0x696e6974ULL;   // accumulator init
constexpr std::uint64_t rng_stream_noise = 0x6e6f6973ULL;  // spurious / drop flips

inline IntegratorState make_initial_state(int width, int height, const SimulatorConfig& cfg) {
    IntegratorState st;
    st.width = width;
    st.height = height;
    st.accumulator.assign(static_cast<std::size_t>(width) * height, 0.0);
    if (cfg.initial_accumulator == InitialAccumulator::uniform_random) {
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                st.accumulator[static_cast<std::size_t>(y) * width + x] =
                    cfg.threshold * rng::uniform(cfg.seed, rng_stream_init,
                                                 static_cast<std::uint64_t>(y),
                                                 static_cast<std::uint64_t>(x));
    }
    return st;
}

}  // namespace detail

/// Convert a single-channel intensity video into a spike stream by per-pixel
/// threshold integration: accumulate L*dt (+ dark current) each step, emit a
/// spike and reset whenever the accumulator reaches the threshold. At most one
/// spike is emitted per pixel per readout step; excess charge is handled by
/// the reset rule. Pass the returned state back in to continue across video
/// segments.
inline SimulationResult simulate_spikes(const FrameSequence& frames, const SimulatorConfig& config,
                                        const IntegratorState* state = nullptr) {
    config.validate();
    frames.validate("simulate_spikes");
    const Image& first = frames.frames.front();
    if (first.channels != 1)
        throw std::invalid_argument("simulate_spikes: frames must be single-channel");
    for (const Image& f : frames.frames)
        for (double v : f.data)
            if (!std::isfinite(v) || v < 0.0)
                throw std::invalid_argument("simulate_spikes: intensities must be finite and >= 0");

    const int w = first.width;
    const int h = first.height;
    const double dt = frames.frame_duration;
    const double c = config.threshold;
    const int nsub = config.temporal_supersample;

    IntegratorState st;
    if (state && !state->empty()) {
        if (state->width != w || state->height != h)
            throw std::invalid_argument("simulate_spikes: state shape mismatch");
        st = *state;
    } else {
        st = detail::make_initial_state(w, h, config);
    }

    SpikeStream out = SpikeStream::zeros(w, h, static_cast<int>(frames.size()), dt,
                                         static_cast<double>(st.frame_offset) * dt);

    for (std::size_t i = 0; i < frames.size(); ++i) {
        const std::uint64_t global = static_cast<std::uint64_t>(st.frame_offset + static_cast<std::int64_t>(i));
        const double* lum = frames[i].plane(0);
        std::uint8_t* bits = out.frame(static_cast<int>(i));
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t p = static_cast<std::size_t>(y) * w + x;
                double acc = st.accumulator[p];
                const double per_sub = (lum[p] * dt + config.dark_current) / nsub;
                bool fired = false;
                for (int s = 0; s < nsub; ++s) {
                    acc += per_sub;
                    if (acc >= c) {
                        fired = true;
                        acc = (config.reset_mode == ResetMode::reset_to_zero) ? 0.0 : acc - c;
                    }
                }
                st.accumulator[p] = acc;
                int bit = fired ? 1 : 0;
                if (config.spurious_spike_prob > 0.0 &&
                    rng::uniform(config.seed ^ detail::rng_stream_noise, global,
                                 static_cast<std::uint64_t>(y),
                                 static_cast<std::uint64_t>(x)) < config.spurious_spike_prob)
                    bit = 1;
                if (bit) bits[p >> 3] = static_cast<std::uint8_t>(bits[p >> 3] | (1u << (p & 7)));
            }
        }
    }

    st.frame_offset += static_cast<std::int64_t>(frames.size());
    return {std::move(out), std::move(st)};
}

/// Independently flip bits of an existing stream: 0 -> 1 with
/// spurious_spike_prob, 1 -> 0 with drop_prob. Draws are keyed by
/// (seed, frame, y, x), so the result is independent of iteration order.
inline SpikeStream inject_noise_profile(const SpikeStream& stream, double spurious_spike_prob,
                                        double drop_prob, std::uint64_t seed) {
    if (spurious_spike_prob < 0.0 || spurious_spike_prob > 1.0 || drop_prob < 0.0 || drop_prob > 1.0)
        throw std::invalid_argument("inject_noise_profile: probabilities must be in [0,1]");

    SpikeStream out = stream;
    if (spurious_spike_prob == 0.0 && drop_prob == 0.0) return out;

    for (int i = 0; i < stream.num_frames; ++i) {
        std::uint8_t* bits = out.frame(i);
        for (int y = 0; y < stream.height; ++y) {
            for (int x = 0; x < stream.width; ++x) {
                const std::size_t p = static_cast<std::size_t>(y) * stream.width + x;
                const int bit = (bits[p >> 3] >> (p & 7)) & 1;
                const double u = rng::uniform(seed, static_cast<std::uint64_t>(i),
                                              static_cast<std::uint64_t>(y),
                                              static_cast<std::uint64_t>(x));
                int flipped = bit;
                if (bit == 0 && u < spurious_spike_prob) flipped = 1;
                if (bit == 1 && u < drop_prob) flipped = 0;
                if (flipped != bit) {
                    const std::uint8_t mask = static_cast<std::uint8_t>(1u << (p & 7));
                    bits[p >> 3] = flipped ? static_cast<std::uint8_t>(bits[p >> 3] | mask)
                                           : static_cast<std::uint8_t>(bits[p >> 3] & ~mask);
                }
            }
        }
    }
    return out;
}

}  // namespace spikedeblur
