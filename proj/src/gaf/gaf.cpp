#include "gafnau/gaf.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace gafnau::gaf {

namespace {

template <typename T>
std::vector<double> normalize_impl(std::span<const T> spectrum, double lo, double hi) {
    if (!(hi > lo)) {
        throw std::invalid_argument("normalize: degenerate cube range [" + std::to_string(lo) + ", " +
                                    std::to_string(hi) + "]");
    }
    std::vector<double> out(spectrum.size());
    const double span = hi - lo;
    for (std::size_t j = 0; j < spectrum.size(); ++j) {
        out[j] = std::clamp((static_cast<double>(spectrum[j]) - lo) / span, 0.0, 1.0);
    }
    return out;
}

void require_unit_interval(std::span<const double> x, const char* op) {
    for (double v : x) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw std::invalid_argument(std::string(op) + ": normalized value " + std::to_string(v) +
                                        " outside [0, 1]");
        }
    }
}

Eigen::VectorXd as_vector(std::span<const double> x) {
    return Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
}

Eigen::VectorXd complement(const Eigen::VectorXd& x) {
    return (1.0 - x.array().square()).max(0.0).sqrt().matrix();
}

}  // namespace

std::vector<double> normalize(std::span<const float> spectrum, double cube_min, double cube_max) {
    return normalize_impl(spectrum, cube_min, cube_max);
}

std::vector<double> normalize(std::span<const double> spectrum, double cube_min, double cube_max) {
    return normalize_impl(spectrum, cube_min, cube_max);
}

PolarSpectrum to_polar(std::span<const double> normalized, double source_min, double source_max) {
    constexpr double kSlack = 1e-9;
    PolarSpectrum p;
    p.source_min = source_min;
    p.source_max = source_max;
    const std::size_t b = normalized.size();
    p.phi.resize(b);
    p.r.resize(b);
    for (std::size_t j = 0; j < b; ++j) {
        const double v = normalized[j];
        if (!(v >= -kSlack && v <= 1.0 + kSlack)) {
            throw std::invalid_argument("to_polar: value " + std::to_string(v) + " outside [0, 1]");
        }
        p.phi[j] = std::acos(std::clamp(v, 0.0, 1.0));
        p.r[j] = static_cast<double>(j + 1) / static_cast<double>(b);
    }
    return p;
}

Eigen::MatrixXd gasf(std::span<const double> normalized) {
    require_unit_interval(normalized, "gasf");
    const Eigen::VectorXd x = as_vector(normalized);
    const Eigen::VectorXd s = complement(x);
    return (x * x.transpose() - s * s.transpose()).cwiseMax(-1.0).cwiseMin(1.0);
}

Eigen::MatrixXd gadf(std::span<const double> normalized) {
    require_unit_interval(normalized, "gadf");
    const Eigen::VectorXd x = as_vector(normalized);
    const Eigen::VectorXd s = complement(x);
    return (s * x.transpose() - x * s.transpose()).cwiseMax(-1.0).cwiseMin(1.0);
}

Eigen::MatrixXd resize_gaf(const Eigen::MatrixXd& m, std::size_t side) {
    if (side == 0) throw std::invalid_argument("resize_gaf: target side must be positive");
    if (m.rows() != m.cols()) throw std::invalid_argument("resize_gaf: matrix must be square");
    const std::size_t b = static_cast<std::size_t>(m.rows());
    if (side == b) return m;

    Eigen::MatrixXd out(side, side);
    if (side < b) {
        for (std::size_t bi = 0; bi < side; ++bi) {
            const std::size_t r0 = bi * b / side, r1 = (bi + 1) * b / side;
            for (std::size_t bj = 0; bj < side; ++bj) {
                const std::size_t c0 = bj * b / side, c1 = (bj + 1) * b / side;
                out(bi, bj) = m.block(r0, c0, r1 - r0, c1 - c0).mean();
            }
        }
        return out;
    }

    // Upsizing. The same index map serves rows and columns, so symmetry and
    // antisymmetry carry over.
    std::vector<std::size_t> lo(side), hi(side);
    std::vector<double> frac(side);
    for (std::size_t i = 0; i < side; ++i) {
        const double pos = b == 1 ? 0.0 : static_cast<double>(i) * static_cast<double>(b - 1) /
                                               static_cast<double>(side - 1);
        lo[i] = std::min(static_cast<std::size_t>(std::floor(pos)), b - 1);
        hi[i] = std::min(lo[i] + 1, b - 1);
        frac[i] = pos - static_cast<double>(lo[i]);
    }
    for (std::size_t i = 0; i < side; ++i) {
        for (std::size_t j = 0; j < side; ++j) {
            const double top = (1.0 - frac[j]) * m(lo[i], lo[j]) + frac[j] * m(lo[i], hi[j]);
            const double bottom = (1.0 - frac[j]) * m(hi[i], lo[j]) + frac[j] * m(hi[i], hi[j]);
            out(i, j) = (1.0 - frac[i]) * top + frac[i] * bottom;
        }
    }
    return out;
}

GafSample encode_pixel(std::span<const float> spectrum, int label, double cube_min, double cube_max,
                       std::size_t side) {
    const std::vector<double> x = normalize(spectrum, cube_min, cube_max);
    return GafSample{resize_gaf(gasf(x), side), resize_gaf(gadf(x), side), label};
}

void write_channels(const GafSample& sample, std::span<double> out) {
    const std::size_t s = sample.side();
    if (out.size() != 2 * s * s) throw std::invalid_argument("write_channels: buffer size mismatch");
    for (std::size_t i = 0; i < s; ++i) {
        for (std::size_t j = 0; j < s; ++j) {
            out[i * s + j] = sample.gasf(i, j);
            out[s * s + i * s + j] = sample.gadf(i, j);
        }
    }
}

}  // namespace gafnau::gaf
