#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gafnau::render {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

struct Palette {
    std::vector<Rgb> classes;  // index = label - 1
    Rgb background;            // label 0

    const Rgb& color(std::uint16_t label) const;
};

// Golden-ratio hue walk from a seeded starting hue; colours are pairwise
// distinct and never equal the background.
Palette make_palette(std::size_t classes, std::uint64_t seed = 0);

// Copy of `map` with every pixel whose ground-truth label is 0 set to 0.
std::vector<std::uint16_t> mask_unlabeled(std::span<const std::uint16_t> map,
                                          std::span<const std::uint16_t> ground_truth);

struct Image {
    std::size_t width = 0, height = 0;
    std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel
};

Image colorize(std::span<const std::uint16_t> labels, std::size_t width, std::size_t height, const Palette& palette);

void write_png(const std::string& path, const Image& image);
Image read_png(const std::string& path);

}  // namespace gafnau::render
