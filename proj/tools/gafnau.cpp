// gafnau: encode, train, eval, render (plus synth for toy cubes).

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "gafnau/gaf.hpp"
#include "gafnau/hsi_cube.hpp"
#include "gafnau/nau_net.hpp"
#include "gafnau/render.hpp"
#include "gafnau/split.hpp"
#include "gafnau/synthetic.hpp"
#include "gafnau/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace gafnau;

namespace {

struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// ---- synth

struct SynthArgs {
    std::string header;
    SyntheticCubeOptions opts;
};

int run_synth(const SynthArgs& a) {
    write_cube(make_synthetic_cube(a.opts), a.header);
    std::cerr << "wrote " << a.header << "\n";
    return 0;
}

// ---- encode

struct EncodeArgs {
    std::string header, out_dir;
    std::size_t side = 32;
};

int run_encode(const EncodeArgs& a) {
    const HsiCube cube = load_cube(a.header);
    const auto [lo, hi] = cube.value_range();
    fs::create_directories(a.out_dir);

    std::ofstream bin(fs::path(a.out_dir) / "samples.f32", std::ios::binary);
    if (!bin) throw std::runtime_error("cannot write " + (fs::path(a.out_dir) / "samples.f32").string());
    json pixels = json::array();
    std::vector<double> buf(2 * a.side * a.side);
    std::vector<float> out(buf.size());
    for (std::size_t r = 0; r < cube.height; ++r) {
        for (std::size_t c = 0; c < cube.width; ++c) {
            const int label = cube.label(r, c);
            if (label == 0) continue;
            gaf::write_channels(gaf::encode_pixel(cube.spectrum(r, c), label, lo, hi, a.side), buf);
            std::copy(buf.begin(), buf.end(), out.begin());
            bin.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size() * 4));
            pixels.push_back({r, c, label});
        }
    }
    json manifest{{"dataset_id", cube.dataset_id},
                  {"count", pixels.size()},
                  {"side", a.side},
                  {"channels", {"GASF", "GADF"}},
                  {"dtype", "float32-le"},
                  {"layout", "N,2,S,S"},
                  {"cube_min", lo},
                  {"cube_max", hi},
                  {"pixels", std::move(pixels)}};
    std::ofstream(fs::path(a.out_dir) / "manifest.json") << manifest.dump(2) << "\n";
    std::cerr << "encoded " << manifest["count"] << " samples of shape 2x" << a.side << "x" << a.side << "\n";
    return 0;
}

// ---- train

struct TrainArgs {
    std::string header, out = "gafnau_model";
    net::ModelConfig model;
    train::TrainConfig train;
    std::uint64_t split_seed = 0;
    bool split_seed_set = false;
    bool no_pe = false, no_agpe = false;
    std::size_t pe_terms = 2;
    std::string optimizer = "adam", renorm = "series-range";
    bool echo_only = false;
};

json train_echo(const TrainArgs& a) {
    return json{{"model", json::parse(net::config_to_json(a.model))},
                {"train", json::parse(train::config_to_json(a.train))},
                {"split", {{"seed", a.split_seed},
                           {"train", a.train.train_fraction},
                           {"validation", a.train.validation_fraction},
                           {"test", 1.0 - a.train.train_fraction - a.train.validation_fraction}}},
                {"header", a.header}};
}

void finalize(TrainArgs& a, bool pe_terms_given) {
    if (a.no_pe && pe_terms_given) throw UsageError("--pe-terms has no effect with --no-pe");
    if (a.no_agpe && a.no_pe) throw UsageError("--no-pe is implied by --no-agpe; pass only one");
    if (a.no_agpe && pe_terms_given) throw UsageError("--pe-terms has no effect with --no-agpe");
    a.model.use_pe = !a.no_pe && !a.no_agpe;
    a.model.use_agpe = !a.no_agpe;
    a.model.pe_terms = a.pe_terms;
    a.model.alpha_renorm = net::alpha_renorm_from_string(a.renorm);
    a.model.init_seed = a.train.seed;
    a.train.optimizer = train::optimizer_from_string(a.optimizer);
    if (!a.split_seed_set) a.split_seed = a.train.seed;
    try {
        a.model.validate();
        a.train.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
}

int run_train(TrainArgs& a) {
    const json echo = train_echo(a);
    if (a.echo_only) {
        std::cout << echo.dump(2) << "\n";
        return 0;
    }
    const HsiCube cube = load_cube(a.header);
    a.model.classes = cube.num_classes();
    const SplitAssignment split = stratified_split(
        cube,
        {a.train.train_fraction, a.train.validation_fraction, 1.0 - a.train.train_fraction - a.train.validation_fraction},
        a.split_seed);

    json full_echo = echo;
    full_echo["model"] = json::parse(net::config_to_json(a.model));
    std::ofstream(a.out + "_config.json") << full_echo.dump(2) << "\n";
    std::cerr << "config " << full_echo.dump() << "\n";

    net::NauNetModel model = net::build_model(a.model);
    std::cerr << "parameters " << model.parameter_count() << " (attention " << model.attention_parameter_count()
              << ")\n";
    const auto t0 = std::chrono::steady_clock::now();
    const train::TrainResult r = train::train(model, cube, split, a.train, [&](const train::EpochLog& e) {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::fprintf(stderr, "epoch %zu lr %.3e loss %.5f val_OA %.4f (%.0fs)\n", e.epoch, e.lr, e.train_loss, e.val_oa,
                     secs);
    });
    train::write_log_csv(r.log, a.out + "_log.csv");

    json meta{{"train", json::parse(train::config_to_json(a.train))},
              {"split", full_echo["split"]},
              {"dataset_id", cube.dataset_id},
              {"best_epoch", r.best_epoch},
              {"best_val_oa", r.best_val_oa}};
    net::save_checkpoint(model, a.out, meta.dump());
    std::cerr << "best epoch " << r.best_epoch << " val_OA " << r.best_val_oa << "; wrote " << a.out << ".{bin,json}\n";
    return 0;
}

// ---- eval / render share checkpoint + split reconstruction

struct Restored {
    HsiCube cube;
    net::NauNetModel model;
    SplitAssignment split;
};

Restored restore(const std::string& header, const std::string& checkpoint) {
    HsiCube cube = load_cube(header);
    net::LoadedCheckpoint ck = net::load_checkpoint(checkpoint);
    const json meta = json::parse(ck.meta_json);
    SplitFractions f;
    std::uint64_t seed = 0;
    if (meta.contains("split")) {
        const json& s = meta["split"];
        f = {s.at("train").get<double>(), s.at("validation").get<double>(), s.at("test").get<double>()};
        seed = s.at("seed").get<std::uint64_t>();
    }
    SplitAssignment split = stratified_split(cube, f, seed);
    return {std::move(cube), std::move(ck.model), std::move(split)};
}

struct EvalArgs {
    std::string header, checkpoint, partition = "test";
};

Partition parse_partition(const std::string& p) {
    if (p == "train") return Partition::kTrain;
    if (p == "validation") return Partition::kValidation;
    if (p == "test") return Partition::kTest;
    throw UsageError("unknown partition '" + p + "'");
}

int run_eval(const EvalArgs& a) {
    const Partition part = parse_partition(a.partition);
    const Restored r = restore(a.header, a.checkpoint);
    const train::Evaluation ev = train::evaluate(r.model, r.cube, r.split, part);
    for (const std::string& w : ev.metrics.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << metrics::metrics_to_json(ev.metrics, ev.confusion) << "\n";
    return 0;
}

struct RenderArgs {
    std::string header, checkpoint, out;
    bool mask = false;
    std::uint64_t palette_seed = 0;
};

int run_render(const RenderArgs& a) {
    const Restored r = restore(a.header, a.checkpoint);
    std::vector<std::uint16_t> map = train::predict_map(r.model, r.cube);
    if (a.mask) map = render::mask_unlabeled(map, r.cube.labels);
    const render::Palette palette = render::make_palette(r.cube.num_classes(), a.palette_seed);
    render::write_png(a.out, render::colorize(map, r.cube.width, r.cube.height, palette));
    std::cerr << "wrote " << a.out << " (" << r.cube.width << "x" << r.cube.height << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GAF-encoded neighbourhood-attention U-Net for hyperspectral pixels"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "write a synthetic striped cube");
    s->add_option("header", synth.header, "output header .json")->required();
    s->add_option("--height", synth.opts.height);
    s->add_option("--width", synth.opts.width);
    s->add_option("--bands", synth.opts.bands);
    s->add_option("--classes", synth.opts.classes);
    s->add_option("--noise", synth.opts.noise_sigma);
    s->add_option("--seed", synth.opts.seed);

    EncodeArgs enc;
    auto* e = app.add_subcommand("encode", "GAF-encode every labeled pixel");
    e->add_option("header", enc.header)->required()->check(CLI::ExistingFile);
    e->add_option("out_dir", enc.out_dir)->required();
    e->add_option("--gaf-side", enc.side, "S")->check(CLI::PositiveNumber);

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "train a model and write a checkpoint");
    t->add_option("header", tr.header)->required();
    t->add_option("--out", tr.out, "checkpoint prefix");
    t->add_option("--epochs", tr.train.epochs)->capture_default_str();
    t->add_option("--batch", tr.train.batch_size)->capture_default_str();
    t->add_option("--lr0", tr.train.lr0)->capture_default_str();
    t->add_option("--lr-decay", tr.train.lr_decay);
    t->add_option("--seed", tr.train.seed)->capture_default_str();
    auto* split_seed = t->add_option("--split-seed", tr.split_seed, "defaults to --seed");
    t->add_option("--optimizer", tr.optimizer)->check(CLI::IsMember({"adam", "sgd"}));
    t->add_option("--gaf-side", tr.model.gaf_side)->capture_default_str();
    t->add_option("--base-filters", tr.model.base_filters)->capture_default_str();
    t->add_option("--depth", tr.model.depth)->capture_default_str();
    auto* pe_terms = t->add_option("--pe-terms", tr.pe_terms);
    t->add_option("--alpha-renorm", tr.renorm)->check(CLI::IsMember({"series-range", "per-map"}));
    t->add_flag("--no-pe", tr.no_pe, "GAF-NAU w/o PE");
    t->add_flag("--no-agpe", tr.no_agpe, "plain GAF U-Net");
    t->add_option("--train-frac", tr.train.train_fraction)->capture_default_str();
    t->add_option("--val-frac", tr.train.validation_fraction)->capture_default_str();
    t->add_flag("--echo-config", tr.echo_only, "print the resolved config and exit");

    EvalArgs ev;
    auto* v = app.add_subcommand("eval", "metrics JSON for a checkpoint");
    v->add_option("header", ev.header)->required();
    v->add_option("checkpoint", ev.checkpoint, "checkpoint prefix")->required();
    v->add_option("--partition", ev.partition)->check(CLI::IsMember({"train", "validation", "test"}));

    RenderArgs rd;
    auto* r = app.add_subcommand("render", "classification map as PNG");
    r->add_option("header", rd.header)->required();
    r->add_option("checkpoint", rd.checkpoint)->required();
    r->add_option("out", rd.out, "output .png")->required();
    r->add_flag("--mask-unlabeled", rd.mask);
    r->add_option("--palette-seed", rd.palette_seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        return app.exit(err, std::cerr, std::cerr);
    }

    try {
        if (*s) return run_synth(synth);
        if (*e) return run_encode(enc);
        if (*t) {
            tr.split_seed_set = split_seed->count() > 0;
            finalize(tr, pe_terms->count() > 0);
            return run_train(tr);
        }
        if (*v) return run_eval(ev);
        if (*r) return run_render(rd);
    } catch (const UsageError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 2;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
    return 1;
}
