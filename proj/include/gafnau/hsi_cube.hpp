#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gafnau {

enum class DataErrorKind {
    kMissingFile,
    kMalformedHeader,
    kSizeMismatch,
    kLabelOutOfRange,
    kNonFiniteValue,
};

class DataError : public std::runtime_error {
   public:
    DataError(DataErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    DataErrorKind kind() const { return kind_; }

   private:
    DataErrorKind kind_;
};

// Hyperspectral cube after band exclusion. Reflectance is stored pixel
// interleaved ([row][col][band]) so each spectrum is contiguous.
struct HsiCube {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t bands = 0;
    std::vector<float> reflectance;
    std::vector<std::uint16_t> labels;  // 0 = unlabeled, 1..C = class
    std::vector<std::string> class_names;
    std::string dataset_id;

    std::size_t num_classes() const { return class_names.size(); }
    std::size_t num_pixels() const { return height * width; }

    std::span<const float> spectrum(std::size_t row, std::size_t col) const {
        return std::span<const float>(reflectance).subspan((row * width + col) * bands, bands);
    }
    std::uint16_t label(std::size_t row, std::size_t col) const { return labels[row * width + col]; }

    std::size_t labeled_count() const;
    // Global min and max reflectance over every pixel and band.
    std::pair<double, double> value_range() const;
    // Throws DataError when a structural invariant is broken.
    void validate() const;
};

// JSON header fields: height, width, raw_bands, excluded_bands, data_file,
// label_file, class_names, dataset_id. File paths resolve against the
// header's directory.
struct CubeHeader {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t raw_bands = 0;
    std::vector<std::size_t> excluded_bands;
    std::string data_file;
    std::string label_file;
    std::vector<std::string> class_names;
    std::string dataset_id;

    std::size_t kept_bands() const { return raw_bands - excluded_bands.size(); }
};

CubeHeader read_header(const std::filesystem::path& header_path);

// Reads the band-sequential float32 raster and uint16 label plane named by the
// header and drops the excluded bands.
HsiCube load_cube(const std::filesystem::path& header_path);

// Writes header + raw files (no excluded bands). Data and label files are
// placed next to the header as <stem>.raw and <stem>_labels.raw.
void write_cube(const HsiCube& cube, const std::filesystem::path& header_path);

}  // namespace gafnau
