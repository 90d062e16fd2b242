#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <sstream>

#include "gafnau/hsi_cube.hpp"
#include "gafnau/metrics.hpp"
#include "gafnau/nau_net.hpp"
#include "gafnau/render.hpp"
#include "gafnau/split.hpp"
#include "gafnau/synthetic.hpp"
#include "gafnau/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace gafnau;

namespace {

const fs::path& work_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "gafnau_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

struct CliRun {
    int code;
    std::string out, err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

CliRun cli(const std::string& args) {
    const fs::path out = work_dir() / "stdout.txt", err = work_dir() / "stderr.txt";
    const std::string cmd = std::string(GAFNAU_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    return {WEXITSTATUS(status), slurp(out), slurp(err)};
}

std::string path(const std::string& name) { return (work_dir() / name).string(); }

// 8x12 cube, three classes, one column of class 2 unlabeled.
const std::string& toy_header() {
    static const std::string header = [] {
        HsiCube cube = make_synthetic_cube({.height = 8, .width = 12, .bands = 16, .classes = 3, .seed = 5});
        for (std::size_t r = 0; r < cube.height; ++r) cube.labels[r * cube.width + 6] = 0;
        const std::string h = path("toy.json");
        write_cube(cube, h);
        return h;
    }();
    return header;
}

const std::string& trained_prefix() {
    static const std::string prefix = [] {
        const std::string p = path("toy_model");
        const CliRun r = cli("train " + toy_header() + " --out " + p +
                          " --epochs 12 --batch 4 --gaf-side 16 --base-filters 4 --depth 2 --seed 3");
        EXPECT_EQ(r.code, 0) << r.err;
        return p;
    }();
    return prefix;
}

}  // namespace

TEST(CliEncode, TinyCubeGivesFourSamples) {
    const std::string header = path("tiny.json");
    ASSERT_EQ(cli("synth " + header + " --height 2 --width 2 --bands 16 --classes 2").code, 0);
    const CliRun r = cli("encode " + header + " " + path("enc_a") + " --gaf-side 8");
    ASSERT_EQ(r.code, 0) << r.err;
    const json manifest = json::parse(slurp(path("enc_a/manifest.json")));
    EXPECT_EQ(manifest["count"].get<int>(), 4);
    EXPECT_EQ(manifest["side"].get<int>(), 8);
    EXPECT_EQ(fs::file_size(path("enc_a/samples.f32")), 4u * 2 * 8 * 8 * sizeof(float));

    ASSERT_EQ(cli("encode " + header + " " + path("enc_b") + " --gaf-side 8").code, 0);
    EXPECT_EQ(slurp(path("enc_a/samples.f32")), slurp(path("enc_b/samples.f32")));
    EXPECT_EQ(slurp(path("enc_a/manifest.json")), slurp(path("enc_b/manifest.json")));
}

TEST(CliEncode, DefaultSideIs32AndUnlabeledSkipped) {
    const CliRun r = cli("encode " + toy_header() + " " + path("enc_toy"));
    ASSERT_EQ(r.code, 0) << r.err;
    const json manifest = json::parse(slurp(path("enc_toy/manifest.json")));
    EXPECT_EQ(manifest["side"].get<int>(), 32);
    EXPECT_EQ(manifest["count"].get<int>(), 8 * 11);
}

TEST(CliTrain, DefaultsEcho) {
    const CliRun r = cli("train " + toy_header() + " --echo-config");
    ASSERT_EQ(r.code, 0) << r.err;
    const json echo = json::parse(r.out);
    EXPECT_EQ(echo["train"]["epochs"].get<int>(), 150);
    EXPECT_EQ(echo["train"]["batch_size"].get<int>(), 64);
    EXPECT_EQ(echo["train"]["lr0"].get<double>(), 1e-3);
    EXPECT_EQ(echo["model"]["gaf_side"].get<int>(), 32);
    EXPECT_EQ(echo["model"]["base_filters"].get<int>(), 128);
    EXPECT_TRUE(echo["model"]["use_agpe"].get<bool>());
    EXPECT_NEAR(echo["split"]["train"].get<double>(), 0.1, 1e-15);
}

TEST(CliTrain, InvalidCombinationsRejectedUpFront) {
    for (const char* flags : {"--no-pe --pe-terms 3", "--no-pe --no-agpe", "--gaf-side 18", "--depth 1",
                              "--train-frac 0.6 --val-frac 0.5", "--epochs 0", "--optimizer rmsprop"}) {
        const CliRun r = cli("train " + toy_header() + " --out " + path("never") + " " + flags);
        EXPECT_NE(r.code, 0) << flags;
        EXPECT_FALSE(r.err.empty()) << flags;
    }
    EXPECT_FALSE(fs::exists(path("never.bin")));
}

TEST(CliTrain, WritesCheckpointLogAndEcho) {
    const std::string p = trained_prefix();
    for (const char* suffix : {".bin", ".json", "_log.csv", "_config.json"}) {
        EXPECT_TRUE(fs::exists(p + suffix)) << suffix;
    }
    std::istringstream log(slurp(p + "_log.csv"));
    std::string line;
    std::size_t lines = 0;
    while (std::getline(log, line)) ++lines;
    EXPECT_EQ(lines, 13u);
    const json echo = json::parse(slurp(p + "_config.json"));
    EXPECT_EQ(echo["train"]["epochs"].get<int>(), 12);
    EXPECT_EQ(echo["model"]["classes"].get<int>(), 3);
}

TEST(CliTrain, NoAgpeIsPlainUnet) {
    const std::string p = path("unet");
    const CliRun r = cli("train " + toy_header() + " --out " + p +
                      " --epochs 1 --batch 8 --gaf-side 16 --base-filters 4 --depth 2 --no-agpe");
    ASSERT_EQ(r.code, 0) << r.err;
    const json manifest = json::parse(slurp(p + ".json"));
    EXPECT_FALSE(manifest["config"]["use_agpe"].get<bool>());
    for (const auto& e : manifest["parameters"]) {
        EXPECT_EQ(e["name"].get<std::string>().find("agpe"), std::string::npos);
    }
}

TEST(CliEval, MatchesLibraryEvaluation) {
    const std::string p = trained_prefix();
    const CliRun r = cli("eval " + toy_header() + " " + p);
    ASSERT_EQ(r.code, 0) << r.err;
    const json got = json::parse(r.out);
    for (const char* key : {"OA", "AA", "kappa", "per_class_recall", "confusion"}) EXPECT_TRUE(got.contains(key));

    const HsiCube cube = load_cube(toy_header());
    const net::LoadedCheckpoint ck = net::load_checkpoint(p);
    const SplitAssignment split = stratified_split(cube, {0.1, 0.1, 0.8}, 3);
    const train::Evaluation ev = train::evaluate(ck.model, cube, split, Partition::kTest);
    EXPECT_EQ(r.out, metrics::metrics_to_json(ev.metrics, ev.confusion) + "\n");
}

TEST(CliEval, PerfectToyCheckpoint) {
    const std::string header = path("easy.json");
    write_cube(make_synthetic_cube({.height = 8, .width = 8, .bands = 16, .classes = 2, .noise_sigma = 0.01}), header);
    const std::string p = path("easy_model");
    ASSERT_EQ(cli("train " + header + " --out " + p +
                  " --epochs 15 --batch 4 --gaf-side 16 --base-filters 4 --depth 2 --train-frac 0.3 --seed 1")
                  .code,
              0);
    const CliRun r = cli("eval " + header + " " + p);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(json::parse(r.out)["OA"].get<double>(), 1.0);
}

TEST(CliRender, PngMatchesPaletteLookup) {
    const std::string p = trained_prefix();
    ASSERT_EQ(cli("render " + toy_header() + " " + p + " " + path("map.png")).code, 0);
    ASSERT_EQ(cli("render " + toy_header() + " " + p + " " + path("masked.png") + " --mask-unlabeled").code, 0);
    const render::Image plain = render::read_png(path("map.png"));
    const render::Image masked = render::read_png(path("masked.png"));
    ASSERT_EQ(plain.width, 12u);
    ASSERT_EQ(plain.height, 8u);

    const HsiCube cube = load_cube(toy_header());
    const auto map = train::predict_map(net::load_checkpoint(p).model, cube);
    const render::Palette pal = render::make_palette(3, 0);
    for (std::size_t i = 0; i < map.size(); ++i) {
        const render::Rgb c = pal.color(map[i]);
        EXPECT_EQ(plain.rgb[3 * i], c.r);
        EXPECT_EQ(plain.rgb[3 * i + 1], c.g);
        EXPECT_EQ(plain.rgb[3 * i + 2], c.b);
        const render::Rgb m = cube.labels[i] == 0 ? pal.background : c;
        EXPECT_EQ(masked.rgb[3 * i], m.r);
        EXPECT_EQ(masked.rgb[3 * i + 1], m.g);
        EXPECT_EQ(masked.rgb[3 * i + 2], m.b);
    }
}

TEST(CliErrors, MissingInputsGiveNonzeroExit) {
    CliRun r = cli("encode " + path("nope.json") + " " + path("x"));
    EXPECT_NE(r.code, 0);
    r = cli("eval " + toy_header() + " " + path("missing_ckpt"));
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("error"), std::string::npos);
    EXPECT_TRUE(r.out.empty());
    EXPECT_NE(cli("").code, 0);
}
