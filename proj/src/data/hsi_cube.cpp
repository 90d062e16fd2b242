#include "gafnau/hsi_cube.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <set>

namespace gafnau {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "raw cube I/O assumes a little-endian host");

std::size_t HsiCube::labeled_count() const {
    return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](auto l) { return l != 0; }));
}

std::pair<double, double> HsiCube::value_range() const {
    if (reflectance.empty()) return {0.0, 0.0};
    auto [lo, hi] = std::minmax_element(reflectance.begin(), reflectance.end());
    return {*lo, *hi};
}

void HsiCube::validate() const {
    if (height == 0 || width == 0 || bands == 0) {
        throw DataError(DataErrorKind::kMalformedHeader, "cube extents must be positive");
    }
    if (reflectance.size() != height * width * bands) {
        throw DataError(DataErrorKind::kSizeMismatch, "reflectance holds " + std::to_string(reflectance.size()) +
                                                          " values, expected " +
                                                          std::to_string(height * width * bands));
    }
    if (labels.size() != height * width) {
        throw DataError(DataErrorKind::kSizeMismatch, "label plane holds " + std::to_string(labels.size()) +
                                                          " values, expected " + std::to_string(height * width));
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] > class_names.size()) {
            throw DataError(DataErrorKind::kLabelOutOfRange,
                            "label " + std::to_string(labels[i]) + " at pixel " + std::to_string(i) +
                                " exceeds class count " + std::to_string(class_names.size()));
        }
    }
    for (float v : reflectance) {
        if (!std::isfinite(v)) throw DataError(DataErrorKind::kNonFiniteValue, "reflectance contains NaN or Inf");
    }
}

namespace {

template <typename T>
std::vector<T> read_raw(const fs::path& path, std::size_t expected_count, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(DataErrorKind::kMissingFile, std::string("cannot open ") + what + " " + path.string());
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    if (bytes != expected_count * sizeof(T)) {
        throw DataError(DataErrorKind::kSizeMismatch, std::string(what) + " " + path.string() + " has " +
                                                          std::to_string(bytes) + " bytes, header implies " +
                                                          std::to_string(expected_count * sizeof(T)));
    }
    std::vector<T> out(expected_count);
    in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(bytes));
    return out;
}

template <typename T>
void write_raw(const fs::path& path, std::span<const T> data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(DataErrorKind::kMissingFile, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size_bytes()));
}

}  // namespace

CubeHeader read_header(const fs::path& header_path) {
    std::ifstream in(header_path);
    if (!in) throw DataError(DataErrorKind::kMissingFile, "cannot open header " + header_path.string());
    CubeHeader h;
    try {
        const json j = json::parse(in);
        h.height = j.at("height").get<std::size_t>();
        h.width = j.at("width").get<std::size_t>();
        h.raw_bands = j.at("raw_bands").get<std::size_t>();
        h.excluded_bands = j.value("excluded_bands", std::vector<std::size_t>{});
        h.data_file = j.at("data_file").get<std::string>();
        h.label_file = j.at("label_file").get<std::string>();
        h.class_names = j.at("class_names").get<std::vector<std::string>>();
        h.dataset_id = j.value("dataset_id", std::string{});
    } catch (const json::exception& e) {
        throw DataError(DataErrorKind::kMalformedHeader, "header " + header_path.string() + ": " + e.what());
    }
    std::set<std::size_t> unique(h.excluded_bands.begin(), h.excluded_bands.end());
    if (unique.size() != h.excluded_bands.size()) {
        throw DataError(DataErrorKind::kMalformedHeader, "excluded_bands lists a band twice");
    }
    if (!unique.empty() && *unique.rbegin() >= h.raw_bands) {
        throw DataError(DataErrorKind::kMalformedHeader,
                        "excluded band " + std::to_string(*unique.rbegin()) + " is not below raw_bands");
    }
    if (h.height == 0 || h.width == 0 || h.kept_bands() == 0) {
        throw DataError(DataErrorKind::kMalformedHeader, "header declares an empty cube");
    }
    h.excluded_bands.assign(unique.begin(), unique.end());
    return h;
}

HsiCube load_cube(const fs::path& header_path) {
    const CubeHeader h = read_header(header_path);
    const fs::path dir = header_path.parent_path();
    const std::size_t plane = h.height * h.width;

    const auto raw = read_raw<float>(dir / h.data_file, plane * h.raw_bands, "data file");
    auto labels = read_raw<std::uint16_t>(dir / h.label_file, plane, "label file");

    std::vector<std::size_t> kept;
    for (std::size_t b = 0; b < h.raw_bands; ++b) {
        if (!std::binary_search(h.excluded_bands.begin(), h.excluded_bands.end(), b)) kept.push_back(b);
    }

    HsiCube cube;
    cube.height = h.height;
    cube.width = h.width;
    cube.bands = kept.size();
    cube.class_names = h.class_names;
    cube.dataset_id = h.dataset_id;
    cube.labels = std::move(labels);
    cube.reflectance.resize(plane * cube.bands);
    for (std::size_t k = 0; k < kept.size(); ++k) {
        const float* src = raw.data() + kept[k] * plane;
        for (std::size_t p = 0; p < plane; ++p) cube.reflectance[p * cube.bands + k] = src[p];
    }
    cube.validate();
    return cube;
}

void write_cube(const HsiCube& cube, const fs::path& header_path) {
    cube.validate();
    const std::string stem = header_path.stem().string();
    const std::string data_name = stem + ".raw";
    const std::string label_name = stem + "_labels.raw";
    const fs::path dir = header_path.parent_path();
    if (!dir.empty()) fs::create_directories(dir);

    const std::size_t plane = cube.num_pixels();
    std::vector<float> bsq(plane * cube.bands);
    for (std::size_t p = 0; p < plane; ++p) {
        for (std::size_t b = 0; b < cube.bands; ++b) bsq[b * plane + p] = cube.reflectance[p * cube.bands + b];
    }
    write_raw<float>(dir / data_name, bsq);
    write_raw<std::uint16_t>(dir / label_name, cube.labels);

    const json j = {
        {"height", cube.height},
        {"width", cube.width},
        {"raw_bands", cube.bands},
        {"excluded_bands", json::array()},
        {"data_file", data_name},
        {"label_file", label_name},
        {"class_names", cube.class_names},
        {"dataset_id", cube.dataset_id},
    };
    std::ofstream out(header_path);
    if (!out) throw DataError(DataErrorKind::kMissingFile, "cannot write header " + header_path.string());
    out << j.dump(2) << '\n';
}

}  // namespace gafnau
