#pragma once

#include <cstdint>

#include "gafnau/hsi_cube.hpp"

namespace gafnau {

struct SyntheticCubeOptions {
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t bands = 64;
    std::size_t classes = 3;
    double noise_sigma = 0.03;
    // Multiplicative per-pixel gain drawn from [1 - gain_jitter, 1 + gain_jitter].
    double gain_jitter = 0.1;
    std::uint64_t seed = 1;
};

// Cube whose classes occupy vertical stripes and whose spectra are noisy
// copies of one sinusoidal prototype per class. Every pixel is labeled.
HsiCube make_synthetic_cube(const SyntheticCubeOptions& options);

}  // namespace gafnau
