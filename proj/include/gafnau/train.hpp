#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gafnau/hsi_cube.hpp"
#include "gafnau/metrics.hpp"
#include "gafnau/nau_net.hpp"
#include "gafnau/split.hpp"

namespace gafnau::train {

enum class Optimizer { kAdam, kSgd };

const char* to_string(Optimizer o);
Optimizer optimizer_from_string(const std::string& name);

struct TrainConfig {
    std::size_t epochs = 150;
    std::size_t batch_size = 64;
    double lr0 = 1e-3;
    double lr_decay = std::exp(-0.01);  // per epoch
    std::uint64_t seed = 0;
    Optimizer optimizer = Optimizer::kAdam;
    double train_fraction = 0.10;
    double validation_fraction = 0.10;

    void validate() const;
};

std::string config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const std::string& text);

// lr0 * lr_decay^epoch
double lr_at_epoch(const TrainConfig& config, std::size_t epoch);

// GAF stacks for a list of pixels, [N, 2, S, S] channel-major, plus 0-based
// class indices.
struct EncodedSet {
    std::size_t side = 0;
    std::vector<double> data;
    std::vector<int> classes;
    std::vector<PixelRef> pixels;

    std::size_t size() const { return classes.size(); }
    std::size_t sample_stride() const { return 2 * side * side; }
};

EncodedSet encode_pixels(const HsiCube& cube, std::vector<PixelRef> pixels, std::size_t side);

struct EpochLog {
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_oa = 0.0;
};

struct TrainResult {
    std::vector<EpochLog> log;
    std::size_t best_epoch = 0;
    double best_val_oa = -1.0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Trains in place. On return the model holds the best-validation-OA weights
// (the last epoch's when the validation partition is empty).
TrainResult train(net::NauNetModel& model, const HsiCube& cube, const SplitAssignment& split,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

// Class index per sample of an encoded set, by majority vote.
std::vector<int> predict(const net::NauNetModel& model, const EncodedSet& set, std::size_t batch_size = 64);

struct Evaluation {
    metrics::ConfusionMatrix confusion;
    metrics::Metrics metrics;
};

Evaluation evaluate(const net::NauNetModel& model, const HsiCube& cube, const SplitAssignment& split,
                    Partition partition);

// Label 1..C for every pixel, labeled or not, row-major.
std::vector<std::uint16_t> predict_map(const net::NauNetModel& model, const HsiCube& cube);

void write_log_csv(const std::vector<EpochLog>& log, const std::string& path);

}  // namespace gafnau::train
