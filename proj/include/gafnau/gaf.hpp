#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

// Gramian angular field encoding of a single pixel spectrum.
namespace gafnau::gaf {

struct PolarSpectrum {
    std::vector<double> phi;  // arccos of the normalized value, in [0, pi/2]
    std::vector<double> r;    // j / B for j = 1..B
    double source_min = 0.0;
    double source_max = 1.0;
};

// Min-max scaling against the cube-wide bounds, clamped to [0, 1].
std::vector<double> normalize(std::span<const float> spectrum, double cube_min, double cube_max);
std::vector<double> normalize(std::span<const double> spectrum, double cube_min, double cube_max);

PolarSpectrum to_polar(std::span<const double> normalized, double source_min = 0.0, double source_max = 1.0);

// cos(phi_i + phi_j), evaluated as x_i x_j - sqrt(1 - x_i^2) sqrt(1 - x_j^2).
Eigen::MatrixXd gasf(std::span<const double> normalized);
// sin(phi_i - phi_j), evaluated as sqrt(1 - x_i^2) x_j - x_i sqrt(1 - x_j^2).
Eigen::MatrixXd gadf(std::span<const double> normalized);

// Block-mean (piecewise aggregate) reduction when side < B, align-corners
// bilinear interpolation when side > B, copy when equal.
Eigen::MatrixXd resize_gaf(const Eigen::MatrixXd& matrix, std::size_t side);

struct GafSample {
    Eigen::MatrixXd gasf;
    Eigen::MatrixXd gadf;
    int label = 0;

    std::size_t side() const { return static_cast<std::size_t>(gasf.rows()); }
    static constexpr std::size_t kChannels = 2;
};

GafSample encode_pixel(std::span<const float> spectrum, int label, double cube_min, double cube_max,
                       std::size_t side);

// Copies the sample into a [2, side, side] channel-major buffer (GASF first).
void write_channels(const GafSample& sample, std::span<double> out);

}  // namespace gafnau::gaf
