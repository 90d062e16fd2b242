#include "gafnau/train.hpp"

#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <random>
#include <stdexcept>

#include "gafnau/gaf.hpp"
#include "gafnau/ops.hpp"

namespace gafnau::train {

using json = nlohmann::json;

const char* to_string(Optimizer o) { return o == Optimizer::kAdam ? "adam" : "sgd"; }

Optimizer optimizer_from_string(const std::string& name) {
    if (name == "adam") return Optimizer::kAdam;
    if (name == "sgd") return Optimizer::kSgd;
    throw std::invalid_argument("unknown optimizer '" + name + "' (adam|sgd)");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (!(lr0 > 0.0)) throw std::invalid_argument("lr0 must be positive");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw std::invalid_argument("lr_decay must lie in (0, 1]");
    if (!(train_fraction > 0.0 && validation_fraction > 0.0 && train_fraction + validation_fraction < 1.0)) {
        throw std::invalid_argument("train/validation fractions must be positive and leave room for test");
    }
}

std::string config_to_json(const TrainConfig& c) {
    return json{{"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"lr0", c.lr0},
                {"lr_decay", c.lr_decay},
                {"seed", c.seed},
                {"optimizer", to_string(c.optimizer)},
                {"train_fraction", c.train_fraction},
                {"validation_fraction", c.validation_fraction}}
        .dump();
}

TrainConfig train_config_from_json(const std::string& text) {
    const json j = json::parse(text);
    TrainConfig c;
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.lr0 = j.at("lr0").get<double>();
    c.lr_decay = j.at("lr_decay").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.optimizer = optimizer_from_string(j.at("optimizer").get<std::string>());
    c.train_fraction = j.at("train_fraction").get<double>();
    c.validation_fraction = j.at("validation_fraction").get<double>();
    return c;
}

double lr_at_epoch(const TrainConfig& c, std::size_t epoch) {
    return c.lr0 * std::pow(c.lr_decay, static_cast<double>(epoch));
}

EncodedSet encode_pixels(const HsiCube& cube, std::vector<PixelRef> pixels, std::size_t side) {
    const auto [lo, hi] = cube.value_range();
    EncodedSet set;
    set.side = side;
    set.data.resize(pixels.size() * 2 * side * side);
    set.classes.reserve(pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        const PixelRef& p = pixels[i];
        const gaf::GafSample s = gaf::encode_pixel(cube.spectrum(p.row, p.col), p.label, lo, hi, side);
        gaf::write_channels(s, std::span<double>(set.data).subspan(i * set.sample_stride(), set.sample_stride()));
        set.classes.push_back(p.label - 1);
    }
    set.pixels = std::move(pixels);
    return set;
}

namespace {

Tensor gather_batch(const EncodedSet& set, std::span<const std::size_t> idx) {
    const std::size_t stride = set.sample_stride();
    std::vector<double> v(idx.size() * stride);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::copy_n(set.data.begin() + static_cast<std::ptrdiff_t>(idx[i] * stride), stride,
                    v.begin() + static_cast<std::ptrdiff_t>(i * stride));
    }
    return Tensor(Shape{idx.size(), 2, set.side, set.side}, std::move(v));
}

class Stepper {
   public:
    Stepper(std::vector<Tensor> params, Optimizer kind) : params_(std::move(params)), kind_(kind) {
        if (kind_ == Optimizer::kAdam) {
            for (const Tensor& p : params_) {
                m_.emplace_back(p.size(), 0.0);
                v_.emplace_back(p.size(), 0.0);
            }
        }
    }

    void zero_grad() {
        for (Tensor& p : params_) p.zero_grad();
    }

    void step(double lr) {
        ++t_;
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
        for (std::size_t k = 0; k < params_.size(); ++k) {
            Tensor& p = params_[k];
            if (!p.has_grad()) continue;
            auto w = p.values();
            auto g = p.grad();
            if (kind_ == Optimizer::kSgd) {
                for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
                continue;
            }
            auto& m = m_[k];
            auto& v = v_[k];
            for (std::size_t i = 0; i < w.size(); ++i) {
                m[i] = b1 * m[i] + (1 - b1) * g[i];
                v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
                w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
            }
        }
    }

   private:
    std::vector<Tensor> params_;
    Optimizer kind_;
    std::vector<std::vector<double>> m_, v_;
    std::size_t t_ = 0;
};

double accuracy(const net::NauNetModel& model, const EncodedSet& set) {
    if (set.size() == 0) return 0.0;
    const std::vector<int> pred = predict(model, set);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == set.classes[i];
    return static_cast<double>(hit) / static_cast<double>(set.size());
}

void check_compatible(const net::NauNetModel& model, const HsiCube& cube) {
    if (model.config().classes != cube.num_classes()) {
        throw std::invalid_argument("model has " + std::to_string(model.config().classes) + " classes, cube has " +
                                    std::to_string(cube.num_classes()));
    }
}

}  // namespace

std::vector<int> predict(const net::NauNetModel& model, const EncodedSet& set, std::size_t batch_size) {
    std::vector<int> out;
    out.reserve(set.size());
    const std::size_t c = model.config().classes, positions = set.side * set.side;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < set.size(); start += batch_size) {
        idx.clear();
        for (std::size_t i = start; i < std::min(set.size(), start + batch_size); ++i) idx.push_back(i);
        Tape tape(Tape::Mode::kInference);
        const Tensor logits = model.forward(tape, gather_batch(set, idx));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            out.push_back(metrics::majority_vote(logits.values().subspan(i * c * positions, c * positions), c, positions));
        }
    }
    return out;
}

TrainResult train(net::NauNetModel& model, const HsiCube& cube, const SplitAssignment& split,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    check_compatible(model, cube);
    const std::size_t side = model.config().gaf_side;
    const EncodedSet train_set = encode_pixels(cube, iterate_pixels(cube, split, Partition::kTrain), side);
    if (train_set.size() == 0) throw std::invalid_argument("training partition is empty");
    const EncodedSet val_set = encode_pixels(cube, iterate_pixels(cube, split, Partition::kValidation), side);

    Stepper opt(model.parameters(), config.optimizer);
    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(train_set.size());
    std::vector<int> targets;
    const std::size_t positions = side * side;

    TrainResult result;
    net::NauNetModel best = model.clone();
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = lr_at_epoch(config, epoch);
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::span<const std::size_t> idx(order.data() + start,
                                                   std::min(config.batch_size, order.size() - start));
            targets.assign(idx.size() * positions, 0);
            for (std::size_t i = 0; i < idx.size(); ++i) {
                std::fill_n(targets.begin() + static_cast<std::ptrdiff_t>(i * positions), positions,
                            train_set.classes[idx[i]]);
            }
            opt.zero_grad();
            Tape tape;
            const Tensor loss = ops::softmax_cross_entropy(tape, model.forward(tape, gather_batch(train_set, idx)), targets);
            tape.backward(loss);
            opt.step(lr);
            loss_sum += loss.item() * static_cast<double>(idx.size());
        }

        EpochLog entry{epoch, lr, loss_sum / static_cast<double>(train_set.size()), accuracy(model, val_set)};
        result.log.push_back(entry);
        if (on_epoch) on_epoch(entry);
        if (val_set.size() == 0 || entry.val_oa > result.best_val_oa) {
            result.best_val_oa = entry.val_oa;
            result.best_epoch = epoch;
            best.copy_parameters_from(model);
        }
    }
    model.copy_parameters_from(best);
    return result;
}

Evaluation evaluate(const net::NauNetModel& model, const HsiCube& cube, const SplitAssignment& split,
                    Partition partition) {
    check_compatible(model, cube);
    Evaluation ev{metrics::ConfusionMatrix(cube.num_classes()), {}};
    const std::vector<PixelRef> pixels = iterate_pixels(cube, split, partition);
    constexpr std::size_t kChunk = 512;
    for (std::size_t start = 0; start < pixels.size(); start += kChunk) {
        std::vector<PixelRef> chunk(pixels.begin() + static_cast<std::ptrdiff_t>(start),
                                    pixels.begin() + static_cast<std::ptrdiff_t>(std::min(pixels.size(), start + kChunk)));
        const EncodedSet set = encode_pixels(cube, std::move(chunk), model.config().gaf_side);
        const std::vector<int> pred = predict(model, set);
        for (std::size_t i = 0; i < pred.size(); ++i) ev.confusion.add(set.classes[i], pred[i]);
    }
    ev.metrics = metrics::compute_metrics(ev.confusion);
    return ev;
}

std::vector<std::uint16_t> predict_map(const net::NauNetModel& model, const HsiCube& cube) {
    check_compatible(model, cube);
    std::vector<std::uint16_t> out(cube.num_pixels(), 0);
    constexpr std::size_t kChunk = 512;
    for (std::size_t start = 0; start < cube.num_pixels(); start += kChunk) {
        std::vector<PixelRef> chunk;
        for (std::size_t i = start; i < std::min(cube.num_pixels(), start + kChunk); ++i) {
            chunk.push_back({i / cube.width, i % cube.width, 1});  // label is a placeholder
        }
        const std::vector<int> pred = predict(model, encode_pixels(cube, std::move(chunk), model.config().gaf_side));
        for (std::size_t i = 0; i < pred.size(); ++i) out[start + i] = static_cast<std::uint16_t>(pred[i] + 1);
    }
    return out;
}

void write_log_csv(const std::vector<EpochLog>& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.precision(std::numeric_limits<double>::max_digits10);
    out << "epoch,lr,train_loss,val_OA\n";
    for (const EpochLog& e : log) out << e.epoch << ',' << e.lr << ',' << e.train_loss << ',' << e.val_oa << '\n';
}

}  // namespace gafnau::train
