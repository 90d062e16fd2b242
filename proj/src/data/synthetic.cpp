#include "gafnau/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace gafnau {

HsiCube make_synthetic_cube(const SyntheticCubeOptions& o) {
    if (o.classes == 0 || o.classes > o.width) throw std::invalid_argument("synthetic cube needs 1..width classes");

    HsiCube cube;
    cube.height = o.height;
    cube.width = o.width;
    cube.bands = o.bands;
    cube.dataset_id = "synthetic";
    for (std::size_t c = 0; c < o.classes; ++c) cube.class_names.push_back("class_" + std::to_string(c + 1));

    std::vector<std::vector<double>> prototypes(o.classes, std::vector<double>(o.bands));
    for (std::size_t c = 0; c < o.classes; ++c) {
        const double freq = 1.0 + static_cast<double>(c);
        const double phase = static_cast<double>(c) * std::numbers::pi / 3.0;
        for (std::size_t b = 0; b < o.bands; ++b) {
            const double t = static_cast<double>(b) / static_cast<double>(o.bands);
            prototypes[c][b] = 0.45 + 0.3 * std::sin(2.0 * std::numbers::pi * freq * t + phase);
        }
    }

    std::mt19937_64 rng(o.seed);
    std::normal_distribution<double> noise(0.0, o.noise_sigma);
    std::uniform_real_distribution<double> gain(1.0 - o.gain_jitter, 1.0 + o.gain_jitter);
    cube.labels.resize(o.height * o.width);
    cube.reflectance.resize(o.height * o.width * o.bands);
    for (std::size_t r = 0; r < o.height; ++r) {
        for (std::size_t col = 0; col < o.width; ++col) {
            const std::size_t c = col * o.classes / o.width;
            const std::size_t p = r * o.width + col;
            cube.labels[p] = static_cast<std::uint16_t>(c + 1);
            const double g = gain(rng);
            for (std::size_t b = 0; b < o.bands; ++b) {
                cube.reflectance[p * o.bands + b] = static_cast<float>(g * prototypes[c][b] + noise(rng));
            }
        }
    }
    return cube;
}

}  // namespace gafnau
