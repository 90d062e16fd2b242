#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>
#include <set>

#include "gafnau/hsi_cube.hpp"
#include "gafnau/split.hpp"
#include "gafnau/synthetic.hpp"

using namespace gafnau;
namespace fs = std::filesystem;

namespace {

class TempDir {
   public:
    TempDir() {
        path_ = fs::temp_directory_path() / ("gafnau_test_" + std::to_string(std::random_device{}()));
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

   private:
    fs::path path_;
};

// Writes a header plus zero-filled (sparse) raw files of the declared size.
fs::path write_geometry(const fs::path& dir, const std::string& name, std::size_t h, std::size_t w,
                        std::size_t raw_bands, std::vector<std::size_t> excluded, std::size_t classes) {
    std::vector<std::string> names;
    for (std::size_t c = 0; c < classes; ++c) names.push_back("c" + std::to_string(c + 1));
    const nlohmann::json j = {{"height", h},           {"width", w},
                              {"raw_bands", raw_bands}, {"excluded_bands", excluded},
                              {"data_file", name + ".raw"}, {"label_file", name + "_gt.raw"},
                              {"class_names", names},   {"dataset_id", name}};
    std::ofstream(dir / (name + ".json")) << j.dump();
    std::ofstream(dir / (name + ".raw")).close();
    fs::resize_file(dir / (name + ".raw"), h * w * raw_bands * 4);
    std::ofstream(dir / (name + "_gt.raw")).close();
    fs::resize_file(dir / (name + "_gt.raw"), h * w * 2);
    return dir / (name + ".json");
}

std::vector<std::size_t> range_list(std::size_t lo, std::size_t hi) {
    std::vector<std::size_t> v;
    for (std::size_t i = lo; i < hi; ++i) v.push_back(i);
    return v;
}

HsiCube cube_with_class_sizes(const std::vector<std::size_t>& sizes, std::size_t unlabeled = 0) {
    std::size_t total = unlabeled;
    for (auto s : sizes) total += s;
    HsiCube cube;
    cube.height = 1;
    cube.width = total;
    cube.bands = 1;
    cube.reflectance.assign(total, 0.5f);
    for (std::size_t c = 0; c < sizes.size(); ++c) {
        cube.class_names.push_back("c");
        cube.labels.insert(cube.labels.end(), sizes[c], static_cast<std::uint16_t>(c + 1));
    }
    cube.labels.insert(cube.labels.end(), unlabeled, 0);
    return cube;
}

}  // namespace

TEST(LoadCube, IndianPinesGeometry) {
    TempDir tmp;
    // 104-108, 150-163, 219 (0-based) are the usual water absorption bands.
    auto excluded = range_list(103, 108);
    for (auto b : range_list(149, 163)) excluded.push_back(b);
    for (auto b : range_list(218, 223)) excluded.push_back(b);
    ASSERT_EQ(excluded.size(), 24u);
    const HsiCube cube = load_cube(write_geometry(tmp.path(), "indian_pines", 145, 145, 224, excluded, 16));
    EXPECT_EQ(cube.bands, 200u);
    EXPECT_EQ(cube.num_classes(), 16u);
    EXPECT_EQ(cube.height, 145u);
    EXPECT_EQ(cube.dataset_id, "indian_pines");
}

TEST(LoadCube, SalinasGeometry) {
    TempDir tmp;
    auto excluded = range_list(107, 112);
    for (auto b : range_list(153, 168)) excluded.push_back(b);
    ASSERT_EQ(excluded.size(), 20u);
    const HsiCube cube = load_cube(write_geometry(tmp.path(), "salinas", 512, 217, 224, excluded, 16));
    EXPECT_EQ(cube.bands, 204u);
    EXPECT_EQ(cube.num_classes(), 16u);
    EXPECT_EQ(cube.width, 217u);
}

TEST(LoadCube, TinyAllUnlabeledCube) {
    TempDir tmp;
    HsiCube cube;
    cube.height = 2;
    cube.width = 2;
    cube.bands = 3;
    cube.reflectance = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
    cube.labels = {0, 0, 0, 0};
    cube.class_names = {"a", "b"};
    write_cube(cube, tmp.path() / "tiny.json");
    const HsiCube back = load_cube(tmp.path() / "tiny.json");
    EXPECT_EQ(back.labeled_count(), 0u);
    EXPECT_EQ(back.bands, 3u);
    EXPECT_EQ(back.reflectance, cube.reflectance);
}

TEST(LoadCube, ExcludedBandsAreDropped) {
    TempDir tmp;
    const std::size_t h = 2, w = 3, raw = 5, plane = h * w;
    std::vector<float> bsq(plane * raw);
    for (std::size_t b = 0; b < raw; ++b)
        for (std::size_t p = 0; p < plane; ++p) bsq[b * plane + p] = static_cast<float>(100 * b + p);
    const fs::path header = write_geometry(tmp.path(), "ex", h, w, raw, {1, 3}, 2);
    std::ofstream(tmp.path() / "ex.raw", std::ios::binary)
        .write(reinterpret_cast<const char*>(bsq.data()), static_cast<std::streamsize>(bsq.size() * 4));
    const HsiCube cube = load_cube(header);
    ASSERT_EQ(cube.bands, 3u);
    auto s = cube.spectrum(1, 2);
    EXPECT_EQ(s[0], 5.0f);
    EXPECT_EQ(s[1], 205.0f);
    EXPECT_EQ(s[2], 405.0f);
}

TEST(LoadCube, DistinctDiagnostics) {
    TempDir tmp;
    auto kind_of = [](const fs::path& p) {
        try {
            load_cube(p);
        } catch (const DataError& e) {
            return e.kind();
        }
        ADD_FAILURE() << "no error for " << p;
        return DataErrorKind::kNonFiniteValue;
    };
    EXPECT_EQ(kind_of(tmp.path() / "absent.json"), DataErrorKind::kMissingFile);

    fs::path header = write_geometry(tmp.path(), "short", 4, 4, 3, {}, 2);
    fs::resize_file(tmp.path() / "short.raw", 4 * 4 * 3 * 4 - 4);
    EXPECT_EQ(kind_of(header), DataErrorKind::kSizeMismatch);

    header = write_geometry(tmp.path(), "badlabel", 2, 2, 1, {}, 2);
    std::vector<std::uint16_t> labels{0, 1, 3, 2};
    std::ofstream(tmp.path() / "badlabel_gt.raw", std::ios::binary).write(reinterpret_cast<const char*>(labels.data()), 8);
    EXPECT_EQ(kind_of(header), DataErrorKind::kLabelOutOfRange);

    header = write_geometry(tmp.path(), "nolabels", 2, 2, 1, {}, 2);
    fs::remove(tmp.path() / "nolabels_gt.raw");
    EXPECT_EQ(kind_of(header), DataErrorKind::kMissingFile);

    std::ofstream(tmp.path() / "garbage.json") << "{\"height\": 3}";
    EXPECT_EQ(kind_of(tmp.path() / "garbage.json"), DataErrorKind::kMalformedHeader);
}

TEST(LoadCube, RoundTripIsBitExact) {
    TempDir tmp;
    HsiCube cube = make_synthetic_cube({.height = 5, .width = 7, .bands = 11, .classes = 3, .seed = 4});
    cube.labels[3] = 0;
    cube.reflectance[17] = -0.0f;
    cube.reflectance[18] = 1e-40f;  // subnormal survives too
    write_cube(cube, tmp.path() / "sub" / "rt.json");
    const HsiCube back = load_cube(tmp.path() / "sub" / "rt.json");
    ASSERT_EQ(back.reflectance.size(), cube.reflectance.size());
    EXPECT_EQ(std::memcmp(back.reflectance.data(), cube.reflectance.data(), cube.reflectance.size() * 4), 0);
    EXPECT_EQ(back.labels, cube.labels);
    EXPECT_EQ(back.class_names, cube.class_names);
}

TEST(StratifiedSplit, HundredPixelClassIsTenTenEighty) {
    const HsiCube cube = cube_with_class_sizes({100});
    const auto split = stratified_split(cube, {0.1, 0.1, 0.8}, 3);
    EXPECT_EQ(split.count(Partition::kTrain), 10u);
    EXPECT_EQ(split.count(Partition::kValidation), 10u);
    EXPECT_EQ(split.count(Partition::kTest), 80u);
}

TEST(StratifiedSplit, TenPixelClassIsOneOneEight) {
    const HsiCube cube = cube_with_class_sizes({10});
    const auto split = stratified_split(cube, {0.1, 0.1, 0.8}, 3);
    EXPECT_EQ(split.count(Partition::kTrain), 1u);
    EXPECT_EQ(split.count(Partition::kValidation), 1u);
    EXPECT_EQ(split.count(Partition::kTest), 8u);
}

TEST(StratifiedSplit, SeedDeterminism) {
    const HsiCube cube = cube_with_class_sizes({40, 25, 61}, 9);
    const auto a = stratified_split(cube, {}, 11);
    const auto b = stratified_split(cube, {}, 11);
    EXPECT_EQ(a.partition, b.partition);
    int differing = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        if (stratified_split(cube, {}, 1000 + s).partition != a.partition) ++differing;
    }
    EXPECT_EQ(differing, 20);
}

TEST(StratifiedSplit, RejectsTinyClassesAndBadFractions) {
    EXPECT_THROW(stratified_split(cube_with_class_sizes({50, 2}), {}, 0), std::invalid_argument);
    const HsiCube ok = cube_with_class_sizes({50});
    EXPECT_THROW(stratified_split(ok, {0.5, 0.5, 0.1}, 0), std::invalid_argument);
    EXPECT_THROW(stratified_split(ok, {0.0, 0.2, 0.8}, 0), std::invalid_argument);
    EXPECT_NO_THROW(stratified_split(cube_with_class_sizes({3}), {}, 0));
}

TEST(StratifiedSplit, StratificationHoldsForRandomClassSizes) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::size_t> sizes;
        const std::size_t classes = 1 + rng() % 6;
        for (std::size_t c = 0; c < classes; ++c) sizes.push_back(3 + rng() % 300);
        const HsiCube cube = cube_with_class_sizes(sizes, rng() % 20);
        const double tf = 0.05 + 0.01 * static_cast<double>(rng() % 20);
        const SplitFractions f{tf, 0.1, 0.9 - tf};
        const auto split = stratified_split(cube, f, rng());
        for (std::size_t c = 1; c <= classes; ++c) {
            std::size_t counts[3] = {0, 0, 0};
            for (std::size_t i = 0; i < cube.labels.size(); ++i) {
                if (cube.labels[i] != c) continue;
                ASSERT_NE(split.partition[i], Partition::kNone);
                ++counts[static_cast<int>(split.partition[i])];
            }
            const double n = static_cast<double>(sizes[c - 1]);
            const double targets[3] = {f.train, f.validation, f.test};
            // Tiny classes are forced to one pixel per partition, which can
            // overshoot a sub-pixel target; the bound applies once every
            // target is at least one pixel.
            const bool representable = n * std::min({f.train, f.validation, f.test}) >= 1.0;
            for (int p = 0; p < 3; ++p) {
                EXPECT_GE(counts[p], 1u);
                if (!representable) continue;
                EXPECT_LE(std::abs(counts[p] / n - targets[p]), 1.0 / n + 1e-12)
                    << "class size " << n << " partition " << p;
            }
        }
        for (std::size_t i = 0; i < cube.labels.size(); ++i) {
            if (cube.labels[i] == 0) EXPECT_EQ(split.partition[i], Partition::kNone);
        }
    }
}

TEST(IteratePixels, PartitionsCoverLabeledSetExactly) {
    HsiCube cube = make_synthetic_cube({.height = 9, .width = 12, .bands = 4, .classes = 3, .seed = 2});
    for (std::size_t i = 0; i < cube.labels.size(); i += 7) cube.labels[i] = 0;
    const auto split = stratified_split(cube, {}, 5);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    std::size_t total = 0;
    for (Partition p : {Partition::kTrain, Partition::kValidation, Partition::kTest}) {
        for (const PixelRef& px : iterate_pixels(cube, split, p)) {
            EXPECT_GE(px.label, 1);
            EXPECT_LE(px.label, 3);
            EXPECT_TRUE(seen.insert({px.row, px.col}).second) << "pixel yielded twice";
            ++total;
        }
    }
    EXPECT_EQ(total, cube.labeled_count());
    std::set<std::pair<std::size_t, std::size_t>> labeled;
    for (std::size_t r = 0; r < cube.height; ++r)
        for (std::size_t c = 0; c < cube.width; ++c)
            if (cube.label(r, c) != 0) labeled.insert({r, c});
    EXPECT_EQ(seen, labeled);
}

TEST(SyntheticCube, ShapeAndLabels) {
    const HsiCube cube = make_synthetic_cube({});
    EXPECT_EQ(cube.num_pixels(), 1024u);
    EXPECT_EQ(cube.bands, 64u);
    EXPECT_EQ(cube.labeled_count(), 1024u);
    EXPECT_NO_THROW(cube.validate());
}
