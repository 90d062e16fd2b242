#include "gafnau/nau_net.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>
#include <stdexcept>

#include "gafnau/ops.hpp"

namespace gafnau::net {

using json = nlohmann::json;


const char* to_string(AlphaRenorm r) { return r == AlphaRenorm::kPerMap ? "per-map" : "series-range"; }

AlphaRenorm alpha_renorm_from_string(const std::string& name) {
    if (name == "per-map") return AlphaRenorm::kPerMap;
    if (name == "series-range") return AlphaRenorm::kSeriesRange;
    throw std::invalid_argument("unknown alpha renormalization '" + name + "' (series-range|per-map)");
}

std::pair<double, double> series_unit_range(const pe::PeSpec& spec) {
    constexpr int kGrid = 4096;
    double lo = pe::partial_sum(spec, spec.terms(), 0.0), hi = lo;
    for (int i = 1; i <= kGrid; ++i) {
        const double v = pe::partial_sum(spec, spec.terms(), static_cast<double>(i) / kGrid);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    return {lo, hi};
}

void ModelConfig::validate() const {
    if (depth < 2) throw std::invalid_argument("model depth must be at least 2, got " + std::to_string(depth));
    if (gaf_side == 0 || gaf_side % (std::size_t{1} << depth) != 0) {
        throw std::invalid_argument("gaf side " + std::to_string(gaf_side) + " is not divisible by 2^" +
                                    std::to_string(depth));
    }
    if (base_filters == 0) throw std::invalid_argument("base_filters must be positive");
    if (classes < 2) throw std::invalid_argument("need at least 2 classes");
    if (pe_terms == 0) throw std::invalid_argument("pe_terms must be positive");
    if (gate_divisor == 0 || base_filters % gate_divisor != 0) {
        throw std::invalid_argument("gate_divisor must divide base_filters");
    }
}

namespace {

Tensor param(Shape shape) { return Tensor(std::move(shape), 0.0, true); }

Conv make_conv(std::size_t in, std::size_t out, std::size_t k, bool bias = true) {
    Conv c;
    c.weight = param({out, in, k, k});
    if (bias) c.bias = param({out});
    return c;
}

LevelConvs make_level(std::size_t in, std::size_t out) { return {make_conv(in, out, 3), make_conv(out, out, 3)}; }

const ops::Conv2dOptions kSame{.pad_h = 1, .pad_w = 1};

Tensor conv_relu(Tape& tape, const Tensor& x, const Conv& c) {
    return ops::relu(tape, ops::conv2d(tape, x, c.weight, c.bias, kSame));
}

Tensor level_forward(Tape& tape, const Tensor& x, const LevelConvs& l) {
    return conv_relu(tape, conv_relu(tape, x, l.first), l.second);
}

Tensor project(Tape& tape, const Tensor& x, const Tensor& w) { return ops::conv2d(tape, x, w, Tensor()); }

void check_operands(const AgPeBlock& b, const Tensor& lower, const Tensor& self, const Tensor& upper) {
    if (!self.defined()) throw std::invalid_argument("agpe: X^l is required");
    if (lower.defined() != b.has_lower_neighbor) {
        throw std::invalid_argument("agpe level " + std::to_string(b.level) + ": lower neighbour " +
                                    (b.has_lower_neighbor ? "missing" : "unexpected"));
    }
    if (upper.defined() != b.has_upper_neighbor) {
        throw std::invalid_argument("agpe level " + std::to_string(b.level) + ": upper neighbour " +
                                    (b.has_upper_neighbor ? "missing" : "unexpected"));
    }
}

struct Projections {
    std::vector<Tensor> maps;  // aligned to X^l, F_int channels each
};

Projections project_neighbours(Tape& tape, const AgPeBlock& b, const Tensor& lower, const Tensor& self,
                               const Tensor& upper) {
    check_operands(b, lower, self, upper);
    Projections p;
    if (b.has_lower_neighbor) p.maps.push_back(project(tape, ops::maxpool2d(tape, lower), b.w_lower));
    p.maps.push_back(project(tape, self, b.w_self));
    if (b.has_upper_neighbor) p.maps.push_back(project(tape, ops::upsample2d(tape, upper), b.w_upper));
    for (const Tensor& m : p.maps) {
        if (m.shape() != p.maps.front().shape()) {
            throw ShapeError("agpe level " + std::to_string(b.level) + ": neighbour extent " + to_string(m.shape()) +
                             " does not align with " + to_string(p.maps.front().shape()));
        }
    }
    return p;
}

Tensor fuse(Tape& tape, const Projections& p, const Tensor& alpha) {
    Tensor out = p.maps.front();
    for (std::size_t i = 1; i < p.maps.size(); ++i) out = ops::mul(tape, out, p.maps[i]);
    return ops::mul(tape, out, alpha);
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> AgPeBlock::parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    if (has_lower_neighbor) out.emplace_back("w_lower", w_lower);
    out.emplace_back("w_self", w_self);
    if (has_upper_neighbor) out.emplace_back("w_upper", w_upper);
    out.emplace_back("w_g", w_g);
    out.emplace_back("b_g", b_g);
    out.emplace_back("w_psi", w_psi);
    out.emplace_back("b_psi", b_psi);
    return out;
}

AgPeBlock make_agpe_block(std::size_t level, std::size_t f_int, std::size_t self_channels,
                          std::optional<std::size_t> lower_channels, std::optional<std::size_t> upper_channels,
                          std::size_t gate_channels, bool use_pe, const pe::PeSpec& spec, AlphaRenorm renorm) {
    if (f_int == 0) throw std::invalid_argument("agpe: F_int must be positive");
    AgPeBlock b;
    b.renorm = renorm;
    b.level = level;
    b.f_int = f_int;
    b.use_pe = use_pe;
    b.pe_spec = spec;
    b.has_lower_neighbor = lower_channels.has_value();
    b.has_upper_neighbor = upper_channels.has_value();
    if (lower_channels) b.w_lower = param({f_int, *lower_channels, 1, 1});
    b.w_self = param({f_int, self_channels, 1, 1});
    if (upper_channels) b.w_upper = param({f_int, *upper_channels, 1, 1});
    const std::size_t width = b.combined_width();
    b.w_g = param({width, gate_channels, 1, 1});
    b.b_g = param({width});
    b.w_psi = param({1, width, 1, 1});
    b.b_psi = param({1});
    return b;
}

AgPeOutput agpe_forward(Tape& tape, const AgPeBlock& b, const Tensor& x_lower, const Tensor& x_self,
                        const Tensor& x_upper, const Tensor& g) {
    const Projections p = project_neighbours(tape, b, x_lower, x_self, x_upper);

    Tensor g_aligned = g.dim(2) == x_self.dim(2) ? g : ops::upsample2d(tape, g);
    Tensor acc = ops::conv2d(tape, g_aligned, b.w_g, b.b_g);
    for (const Tensor& m : p.maps) {
        Tensor term = b.use_pe ? pe::pe_expand(tape, m, b.pe_spec) : m;
        if (term.shape() != acc.shape()) {
            throw ShapeError("agpe level " + std::to_string(b.level) + ": gating term " + to_string(acc.shape()) +
                             " vs feature term " + to_string(term.shape()));
        }
        acc = ops::add(tape, acc, term);
    }
    Tensor q = ops::conv2d(tape, ops::relu(tape, acc), b.w_psi, b.b_psi);
    Tensor a = ops::sigmoid(tape, q);
    if (b.use_pe) a = pe::pe_series(tape, a, b.pe_spec);
    Tensor alpha;
    if (b.renorm == AlphaRenorm::kPerMap) {
        alpha = ops::minmax_normalize(tape, a);
    } else if (b.use_pe) {
        const auto [lo, hi] = series_unit_range(b.pe_spec);
        alpha = ops::affine(tape, a, 1.0 / (hi - lo), -lo / (hi - lo));
    } else {
        alpha = a;  // sigmoid already spans [0, 1]
    }
    return {fuse(tape, p, alpha), alpha};
}

Tensor agpe_fuse(Tape& tape, const AgPeBlock& b, const Tensor& x_lower, const Tensor& x_self, const Tensor& x_upper,
                 const Tensor& alpha) {
    return fuse(tape, project_neighbours(tape, b, x_lower, x_self, x_upper), alpha);
}

NauNetModel::NauNetModel(const ModelConfig& config) : config_(config) {
    config_.validate();
    const std::size_t d = config_.depth;
    const pe::PeSpec spec = pe::make_spec(config_.pe_function, config_.pe_terms);

    std::size_t in = kInputChannels;
    for (std::size_t l = 0; l < d; ++l) {
        encoder_.push_back(make_level(in, config_.channels(l)));
        in = config_.channels(l);
    }
    bottleneck_ = make_level(in, config_.channels(d));

    decoder_.resize(d);
    for (std::size_t l = 0; l < d; ++l) {
        const std::size_t skip = config_.use_agpe ? config_.gate_width(l) : config_.channels(l);
        decoder_[l] = make_level(config_.channels(l + 1) + skip, config_.channels(l));
        if (!config_.use_agpe) continue;
        std::optional<std::size_t> lower, upper;
        if (l > 0) lower = config_.channels(l - 1);
        if (l + 1 < d) upper = config_.channels(l + 1);
        gates_.push_back(make_agpe_block(l, config_.gate_width(l), config_.channels(l), lower, upper,
                                         config_.channels(l + 1), config_.use_pe, spec, config_.alpha_renorm));
    }
    head_ = make_conv(config_.channels(0), config_.classes, 1);
    he_uniform_init(*this, config_.init_seed);
}

Tensor NauNetModel::forward(Tape& tape, const Tensor& batch, Trace* trace) const {
    const std::size_t s = config_.gaf_side;
    if (batch.rank() != 4 || batch.dim(1) != kInputChannels || batch.dim(2) != s || batch.dim(3) != s) {
        throw ShapeError("model expects [N, " + std::to_string(kInputChannels) + ", " + std::to_string(s) + ", " +
                         std::to_string(s) + "] input, got " + to_string(batch.shape()));
    }
    const std::size_t d = config_.depth;
    std::vector<Tensor> enc(d);
    Tensor x = batch;
    for (std::size_t l = 0; l < d; ++l) {
        if (l > 0) x = ops::maxpool2d(tape, x);
        x = level_forward(tape, x, encoder_[l]);
        enc[l] = x;
        if (trace) trace->encoder.push_back(x.shape());
    }
    Tensor dec = level_forward(tape, ops::maxpool2d(tape, x), bottleneck_);
    if (trace) {
        trace->bottleneck = dec.shape();
        trace->decoder.assign(d, Shape{});
        trace->alphas.assign(config_.use_agpe ? d : 0, Tensor());
    }
    for (std::size_t l = d; l-- > 0;) {
        Tensor skip = enc[l];
        if (config_.use_agpe) {
            const AgPeOutput gate = agpe_forward(tape, gates_[l], l > 0 ? enc[l - 1] : Tensor(), enc[l],
                                                 l + 1 < d ? enc[l + 1] : Tensor(), dec);
            skip = gate.gated;
            if (trace) trace->alphas[l] = gate.alpha;
        }
        const std::array<Tensor, 2> parts{ops::upsample2d(tape, dec), skip};
        dec = level_forward(tape, ops::concat_channels(tape, parts), decoder_[l]);
        if (trace) trace->decoder[l] = dec.shape();
    }
    return ops::conv2d(tape, dec, head_.weight, head_.bias);
}

std::vector<std::pair<std::string, Tensor>> NauNetModel::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    auto conv = [&](const std::string& name, const Conv& c) {
        out.emplace_back(name + ".weight", c.weight);
        if (c.bias.defined()) out.emplace_back(name + ".bias", c.bias);
    };
    auto level = [&](const std::string& name, const LevelConvs& l) {
        conv(name + ".conv1", l.first);
        conv(name + ".conv2", l.second);
    };
    for (std::size_t l = 0; l < encoder_.size(); ++l) level("enc" + std::to_string(l), encoder_[l]);
    level("bottleneck", bottleneck_);
    for (std::size_t l = 0; l < decoder_.size(); ++l) level("dec" + std::to_string(l), decoder_[l]);
    for (const AgPeBlock& g : gates_) {
        for (auto& [n, t] : g.parameters()) out.emplace_back("agpe" + std::to_string(g.level) + "." + n, t);
    }
    conv("head", head_);
    return out;
}

std::vector<Tensor> NauNetModel::parameters() const {
    std::vector<Tensor> out;
    for (auto& [n, t] : named_parameters()) out.push_back(t);
    return out;
}

std::size_t NauNetModel::parameter_count() const {
    std::size_t n = 0;
    for (auto& [name, t] : named_parameters()) n += t.size();
    return n;
}

std::size_t NauNetModel::attention_parameter_count() const {
    std::size_t n = 0;
    for (const AgPeBlock& g : gates_) {
        for (auto& [name, t] : g.parameters()) n += t.size();
    }
    return n;
}

NauNetModel NauNetModel::clone() const {
    NauNetModel copy(*this);
    copy.for_each_parameter([](Tensor& t) {
        t = t.detached_copy();
        t.set_requires_grad(true);
    });
    return copy;
}

void NauNetModel::for_each_parameter(const std::function<void(Tensor&)>& fn) {
    auto conv = [&](Conv& c) {
        fn(c.weight);
        if (c.bias.defined()) fn(c.bias);
    };
    auto level = [&](LevelConvs& l) {
        conv(l.first);
        conv(l.second);
    };
    for (auto& l : encoder_) level(l);
    level(bottleneck_);
    for (auto& l : decoder_) level(l);
    for (AgPeBlock& g : gates_) {
        if (g.has_lower_neighbor) fn(g.w_lower);
        fn(g.w_self);
        if (g.has_upper_neighbor) fn(g.w_upper);
        fn(g.w_g);
        fn(g.b_g);
        fn(g.w_psi);
        fn(g.b_psi);
    }
    conv(head_);
}

void NauNetModel::copy_parameters_from(const NauNetModel& other) {
    auto src = other.named_parameters();
    auto dst = named_parameters();
    if (src.size() != dst.size()) throw std::invalid_argument("copy_parameters_from: architecture mismatch");
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (src[i].second.shape() != dst[i].second.shape()) {
            throw std::invalid_argument("copy_parameters_from: shape mismatch at " + dst[i].first);
        }
        std::copy(src[i].second.values().begin(), src[i].second.values().end(), dst[i].second.values().begin());
    }
}

NauNetModel build_model(const ModelConfig& config) { return NauNetModel(config); }

std::size_t count_parameters(const ModelConfig& c) {
    c.validate();
    auto conv = [](std::size_t in, std::size_t out, std::size_t k) { return out * in * k * k + out; };
    auto level = [&](std::size_t in, std::size_t out) { return conv(in, out, 3) + conv(out, out, 3); };
    std::size_t n = 0, in = kInputChannels;
    for (std::size_t l = 0; l < c.depth; ++l) {
        n += level(in, c.channels(l));
        in = c.channels(l);
    }
    n += level(in, c.channels(c.depth));
    for (std::size_t l = 0; l < c.depth; ++l) {
        const std::size_t skip = c.use_agpe ? c.gate_width(l) : c.channels(l);
        n += level(c.channels(l + 1) + skip, c.channels(l));
        if (!c.use_agpe) continue;
        const std::size_t f = c.gate_width(l);
        const std::size_t width = c.use_pe ? f * c.pe_terms : f;
        if (l > 0) n += f * c.channels(l - 1);
        n += f * c.channels(l);
        if (l + 1 < c.depth) n += f * c.channels(l + 1);
        n += width * c.channels(l + 1) + width;  // w_g, b_g
        n += width + 1;                          // w_psi, b_psi
    }
    n += conv(c.channels(0), c.classes, 1);
    return n;
}

void he_uniform_init(NauNetModel& model, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    model.for_each_parameter([&](Tensor& t) {
        if (t.rank() != 4) {
            for (double& v : t.values()) v = 0.0;
            return;
        }
        const double fan_in = static_cast<double>(t.dim(1) * t.dim(2) * t.dim(3));
        const double bound = std::sqrt(6.0 / fan_in);
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& v : t.values()) v = dist(rng);
    });
}

std::string config_to_json(const ModelConfig& c) {
    json j{{"gaf_side", c.gaf_side},       {"base_filters", c.base_filters},
           {"depth", c.depth},             {"classes", c.classes},
           {"use_pe", c.use_pe},           {"use_agpe", c.use_agpe},
           {"pe_function", pe::to_string(c.pe_function)},
           {"pe_terms", c.pe_terms},       {"gate_divisor", c.gate_divisor},
           {"alpha_renorm", to_string(c.alpha_renorm)},
           {"init_seed", c.init_seed}};
    return j.dump();
}

namespace {

ModelConfig config_from(const json& j) {
    ModelConfig c;
    c.gaf_side = j.at("gaf_side").get<std::size_t>();
    c.base_filters = j.at("base_filters").get<std::size_t>();
    c.depth = j.at("depth").get<std::size_t>();
    c.classes = j.at("classes").get<std::size_t>();
    c.use_pe = j.at("use_pe").get<bool>();
    c.use_agpe = j.at("use_agpe").get<bool>();
    c.pe_function = pe::series_function_from_string(j.at("pe_function").get<std::string>());
    c.pe_terms = j.at("pe_terms").get<std::size_t>();
    c.gate_divisor = j.value("gate_divisor", std::size_t{1});
    c.alpha_renorm = alpha_renorm_from_string(j.value("alpha_renorm", std::string("series-range")));
    c.init_seed = j.value("init_seed", std::uint64_t{1});
    return c;
}

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

}  // namespace

ModelConfig config_from_json(const std::string& text) {
    try {
        return config_from(json::parse(text));
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("model config: ") + e.what());
    }
}

void save_checkpoint(const NauNetModel& model, const std::string& prefix, const std::string& meta_json) {
    json manifest;
    manifest["format"] = "gafnau-checkpoint";
    manifest["version"] = 1;
    manifest["dtype"] = "float32-le";
    manifest["config"] = json::parse(config_to_json(model.config()));
    manifest["meta"] = json::parse(meta_json);
    json params = json::array();

    std::ofstream bin(prefix + ".bin", std::ios::binary);
    if (!bin) throw CheckpointError("cannot write " + prefix + ".bin");
    std::size_t offset = 0;
    for (auto& [name, t] : model.named_parameters()) {
        params.push_back({{"name", name}, {"offset", offset}, {"shape", t.shape()}});
        std::vector<float> buf(t.values().begin(), t.values().end());
        bin.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
        offset += buf.size();
    }
    if (!bin) throw CheckpointError("short write to " + prefix + ".bin");
    manifest["parameters"] = std::move(params);
    manifest["total"] = offset;

    std::ofstream js(prefix + ".json");
    if (!js) throw CheckpointError("cannot write " + prefix + ".json");
    js << manifest.dump(2) << "\n";
}

LoadedCheckpoint load_checkpoint(const std::string& prefix) {
    std::ifstream js(prefix + ".json");
    if (!js) throw CheckpointError("cannot open " + prefix + ".json");
    json manifest;
    try {
        manifest = json::parse(js);
    } catch (const json::exception& e) {
        throw CheckpointError(prefix + ".json: " + e.what());
    }
    if (manifest.value("format", "") != "gafnau-checkpoint") throw CheckpointError(prefix + ".json: not a checkpoint");

    NauNetModel model(config_from(manifest.at("config")));
    std::ifstream bin(prefix + ".bin", std::ios::binary | std::ios::ate);
    if (!bin) throw CheckpointError("cannot open " + prefix + ".bin");
    const auto bytes = static_cast<std::size_t>(bin.tellg());
    const std::size_t total = manifest.at("total").get<std::size_t>();
    if (bytes != total * sizeof(float)) {
        throw CheckpointError(prefix + ".bin: expected " + std::to_string(total * sizeof(float)) + " bytes, found " +
                              std::to_string(bytes));
    }
    const auto entries = manifest.at("parameters");
    auto named = model.named_parameters();
    if (entries.size() != named.size()) throw CheckpointError("parameter count mismatch with config");
    for (std::size_t i = 0; i < named.size(); ++i) {
        auto& [name, t] = named[i];
        const json& e = entries[i];
        if (e.at("name").get<std::string>() != name || e.at("shape").get<Shape>() != t.shape()) {
            throw CheckpointError("manifest entry " + std::to_string(i) + " does not match " + name + " " +
                                  to_string(t.shape()));
        }
        std::vector<float> buf(t.size());
        bin.seekg(static_cast<std::streamoff>(e.at("offset").get<std::size_t>() * sizeof(float)));
        bin.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
        if (!bin) throw CheckpointError("short read for " + name);
        std::copy(buf.begin(), buf.end(), t.values().begin());
    }
    return {std::move(model), manifest.value("meta", json::object()).dump()};
}

}  // namespace gafnau::net
