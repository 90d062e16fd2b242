#pragma once

#include <cstdint>
#include <vector>

#include "gafnau/hsi_cube.hpp"

namespace gafnau {

enum class Partition : std::int8_t { kNone = -1, kTrain = 0, kValidation = 1, kTest = 2 };

const char* to_string(Partition p);

struct SplitFractions {
    double train = 0.1;
    double validation = 0.1;
    double test = 0.8;
};

struct SplitAssignment {
    std::vector<Partition> partition;  // one entry per pixel, row-major
    SplitFractions fractions;
    std::uint64_t seed = 0;

    std::size_t count(Partition p) const;
};

// Per-class seeded shuffle, then contiguous slicing: floor(n*train) to train,
// up to floor(n*(train+validation)) to validation, the remainder to test.
// Every class must have at least 3 pixels and gets one in each partition.
SplitAssignment stratified_split(const HsiCube& cube, const SplitFractions& fractions, std::uint64_t seed);

struct PixelRef {
    std::size_t row;
    std::size_t col;
    int label;  // 1..C
};

// Pixels of one partition in row-major order.
std::vector<PixelRef> iterate_pixels(const HsiCube& cube, const SplitAssignment& split, Partition which);

}  // namespace gafnau
