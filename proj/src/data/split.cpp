#include "gafnau/split.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace gafnau {

const char* to_string(Partition p) {
    switch (p) {
        case Partition::kTrain:
            return "train";
        case Partition::kValidation:
            return "validation";
        case Partition::kTest:
            return "test";
        case Partition::kNone:
            break;
    }
    return "none";
}

std::size_t SplitAssignment::count(Partition p) const {
    return static_cast<std::size_t>(std::count(partition.begin(), partition.end(), p));
}

SplitAssignment stratified_split(const HsiCube& cube, const SplitFractions& f, std::uint64_t seed) {
    if (!(f.train > 0 && f.validation > 0 && f.test > 0)) {
        throw std::invalid_argument("split fractions must all be positive");
    }
    if (std::abs(f.train + f.validation + f.test - 1.0) > 1e-9) {
        throw std::invalid_argument("split fractions must sum to 1");
    }

    const std::size_t classes = cube.num_classes();
    std::vector<std::vector<std::size_t>> members(classes + 1);
    for (std::size_t i = 0; i < cube.labels.size(); ++i) {
        if (cube.labels[i] != 0) members[cube.labels[i]].push_back(i);
    }

    SplitAssignment out;
    out.partition.assign(cube.num_pixels(), Partition::kNone);
    out.fractions = f;
    out.seed = seed;

    std::mt19937_64 rng(seed);
    for (std::size_t c = 1; c <= classes; ++c) {
        auto& idx = members[c];
        const std::size_t n = idx.size();
        if (n == 0) continue;
        if (n < 3) {
            throw std::invalid_argument("class " + std::to_string(c) + " has " + std::to_string(n) +
                                        " labeled pixels; at least 3 are needed to populate every partition");
        }
        // Fisher-Yates with explicit modulo keeps the shuffle identical across
        // standard library implementations.
        for (std::size_t i = n - 1; i > 0; --i) std::swap(idx[i], idx[rng() % (i + 1)]);

        // Flooring the cumulative boundaries keeps every partition within one
        // pixel of its target. The epsilon absorbs 100 * 0.1 = 10.000000000000002.
        const auto boundary = [n](double frac) { return static_cast<std::size_t>(std::floor(n * frac + 1e-9)); };
        std::size_t n_train = std::max<std::size_t>(1, boundary(f.train));
        std::size_t n_val = std::max<std::size_t>(1, boundary(f.train + f.validation) - boundary(f.train));
        while (n_train + n_val >= n) {
            if (n_train >= n_val) {
                --n_train;
            } else {
                --n_val;
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            Partition p = i < n_train ? Partition::kTrain
                                      : (i < n_train + n_val ? Partition::kValidation : Partition::kTest);
            out.partition[idx[i]] = p;
        }
    }
    return out;
}

std::vector<PixelRef> iterate_pixels(const HsiCube& cube, const SplitAssignment& split, Partition which) {
    if (split.partition.size() != cube.num_pixels()) {
        throw std::invalid_argument("split assignment does not match cube extent");
    }
    std::vector<PixelRef> out;
    for (std::size_t r = 0; r < cube.height; ++r) {
        for (std::size_t c = 0; c < cube.width; ++c) {
            if (split.partition[r * cube.width + c] == which) out.push_back({r, c, cube.label(r, c)});
        }
    }
    return out;
}

}  // namespace gafnau
