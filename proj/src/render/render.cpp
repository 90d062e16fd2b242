#include "gafnau/render.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <random>
#include <stdexcept>

namespace gafnau::render {

const Rgb& Palette::color(std::uint16_t label) const {
    if (label == 0) return background;
    if (label > classes.size()) {
        throw std::out_of_range("palette has " + std::to_string(classes.size()) + " classes, got label " +
                                std::to_string(label));
    }
    return classes[label - 1];
}

namespace {

Rgb hsv(double h, double s, double v) {
    const double c = v * s;
    const double hp = std::fmod(h, 1.0) * 6.0;
    const double x = c * (1 - std::abs(std::fmod(hp, 2.0) - 1));
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(hp)) {
        case 0: r = c, g = x; break;
        case 1: r = x, g = c; break;
        case 2: g = c, b = x; break;
        case 3: g = x, b = c; break;
        case 4: r = x, b = c; break;
        default: r = c, b = x; break;
    }
    const double m = v - c;
    auto q = [m](double u) { return static_cast<std::uint8_t>(std::lround((u + m) * 255.0)); };
    return {q(r), q(g), q(b)};
}

}  // namespace

Palette make_palette(std::size_t classes, std::uint64_t seed) {
    constexpr double kGolden = 0.618033988749895;
    std::mt19937_64 rng(seed);
    double hue = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    Palette p;
    p.background = {0, 0, 0};
    for (std::size_t i = 0; i < classes; ++i) {
        // value and saturation cycle too
        const double sat = (i / 3) % 2 == 0 ? 0.75 : 0.45;
        const double val = i % 3 == 0 ? 0.95 : (i % 3 == 1 ? 0.75 : 0.55);
        Rgb c = hsv(hue, sat, val);
        while (c == p.background || std::find(p.classes.begin(), p.classes.end(), c) != p.classes.end()) {
            c.r = static_cast<std::uint8_t>(c.r + 1);
        }
        p.classes.push_back(c);
        hue = std::fmod(hue + kGolden, 1.0);
    }
    return p;
}

std::vector<std::uint16_t> mask_unlabeled(std::span<const std::uint16_t> map,
                                          std::span<const std::uint16_t> ground_truth) {
    if (map.size() != ground_truth.size()) throw std::invalid_argument("mask_unlabeled: size mismatch");
    std::vector<std::uint16_t> out(map.begin(), map.end());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (ground_truth[i] == 0) out[i] = 0;
    }
    return out;
}

Image colorize(std::span<const std::uint16_t> labels, std::size_t width, std::size_t height, const Palette& palette) {
    if (labels.size() != width * height) throw std::invalid_argument("colorize: label count does not match W*H");
    Image img{width, height, std::vector<std::uint8_t>(labels.size() * 3)};
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const Rgb& c = palette.color(labels[i]);
        img.rgb[3 * i] = c.r;
        img.rgb[3 * i + 1] = c.g;
        img.rgb[3 * i + 2] = c.b;
    }
    return img;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};

void png_quiet(png_structp, png_const_charp) {}

// libpng reports errors by longjmp; keep these frames free of C++ objects.
bool write_rows(std::FILE* f, const Image& image) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_quiet);
    if (!png) return false;
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        return false;
    }
    png_init_io(png, f);
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t y = 0; y < image.height; ++y) png_write_row(png, image.rgb.data() + y * image.width * 3);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return true;
}

bool read_rows(std::FILE* f, Image* img) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_quiet);
    if (!png) return false;
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        return false;
    }
    png_init_io(png, f);
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_palette_to_rgb(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    img->width = png_get_image_width(png, info);
    img->height = png_get_image_height(png, info);
    img->rgb.resize(img->width * img->height * 3);
    for (std::size_t y = 0; y < img->height; ++y) png_read_row(png, img->rgb.data() + y * img->width * 3, nullptr);
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return true;
}

}  // namespace

void write_png(const std::string& path, const Image& image) {
    if (image.rgb.size() != image.width * image.height * 3) throw std::invalid_argument("write_png: bad buffer size");
    std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("cannot write " + path);
    if (!write_rows(f.get(), image)) throw std::runtime_error("libpng failed writing " + path);
}

Image read_png(const std::string& path) {
    std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("cannot open " + path);
    Image img;
    if (!read_rows(f.get(), &img)) throw std::runtime_error("libpng failed reading " + path);
    return img;
}

}  // namespace gafnau::render
