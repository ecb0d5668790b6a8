#pragma once

// Umbrella header for the spike-guided deblurring toolkit.

#include "spikedeblur/blur_model.hpp"
#include "spikedeblur/image.hpp"
#include "spikedeblur/metrics.hpp"
#include "spikedeblur/pipeline.hpp"
#include "spikedeblur/png_io.hpp"
#include "spikedeblur/rng.hpp"
#include "spikedeblur/sdm.hpp"
#include "spikedeblur/simulator.hpp"
#include "spikedeblur/spike_stream.hpp"
