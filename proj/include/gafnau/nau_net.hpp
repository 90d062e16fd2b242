#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gafnau/pe_layer.hpp"
#include "gafnau/tensor.hpp"

namespace gafnau::net {

inline constexpr std::size_t kInputChannels = 2;  // GASF, GADF

// How the attention map is brought back into [0, 1] after sigmoid and PE.
//   kSeriesRange: fixed affine map of the series' image of [0, 1] onto [0, 1]
//   kPerMap:      min-max over each sample's map
enum class AlphaRenorm { kSeriesRange, kPerMap };

const char* to_string(AlphaRenorm r);
using gafnau::to_string;
AlphaRenorm alpha_renorm_from_string(const std::string& name);

struct ModelConfig {
    std::size_t gaf_side = 32;
    std::size_t base_filters = 128;
    std::size_t depth = 3;
    std::size_t classes = 16;
    bool use_pe = true;
    bool use_agpe = true;
    pe::SeriesFunction pe_function = pe::SeriesFunction::kArctan;
    std::size_t pe_terms = 2;
    // F_int = channels(level) / gate_divisor
    std::size_t gate_divisor = 1;
    AlphaRenorm alpha_renorm = AlphaRenorm::kSeriesRange;
    std::uint64_t init_seed = 1;

    std::size_t channels(std::size_t level) const { return base_filters << level; }
    std::size_t gate_width(std::size_t level) const { return channels(level) / gate_divisor; }
    void validate() const;
};

struct Conv {
    Tensor weight;  // [out, in, k, k]
    Tensor bias;    // [out], may be undefined
};

struct AgPeBlock {
    std::size_t level = 0;
    std::size_t f_int = 0;
    bool has_lower_neighbor = false;
    bool has_upper_neighbor = false;
    bool use_pe = true;
    pe::PeSpec pe_spec;
    AlphaRenorm renorm = AlphaRenorm::kSeriesRange;

    Tensor w_lower;  // [F_int, C_{l-1}, 1, 1]
    Tensor w_self;   // [F_int, C_l, 1, 1]
    Tensor w_upper;  // [F_int, C_{l+1}, 1, 1]
    Tensor w_g;      // [F_int*K, C_g, 1, 1]
    Tensor b_g;      // [F_int*K]
    Tensor w_psi;    // [1, F_int*K, 1, 1]
    Tensor b_psi;    // [1]

    // Width of the additive combination: F_int*K with PE, F_int without.
    std::size_t combined_width() const { return use_pe ? f_int * pe_spec.terms() : f_int; }
    std::vector<std::pair<std::string, Tensor>> parameters() const;
};

struct AgPeOutput {
    Tensor gated;  // [N, F_int, H_l, W_l]
    Tensor alpha;  // [N, 1, H_l, W_l]
};

AgPeBlock make_agpe_block(std::size_t level, std::size_t f_int, std::size_t self_channels,
                          std::optional<std::size_t> lower_channels, std::optional<std::size_t> upper_channels,
                          std::size_t gate_channels, bool use_pe, const pe::PeSpec& spec,
                          AlphaRenorm renorm = AlphaRenorm::kSeriesRange);

// Min and max of S_K over [0, 1], sampled on a fine grid.
std::pair<double, double> series_unit_range(const pe::PeSpec& spec);

// Neighbours are at native resolution: lower is 2x finer, upper and g 2x
// coarser than x_self. Pass an undefined Tensor for an absent neighbour.
AgPeOutput agpe_forward(Tape& tape, const AgPeBlock& block, const Tensor& x_lower, const Tensor& x_self,
                        const Tensor& x_upper, const Tensor& g);

// Fusion step alone, for an externally supplied alpha.
Tensor agpe_fuse(Tape& tape, const AgPeBlock& block, const Tensor& x_lower, const Tensor& x_self,
                 const Tensor& x_upper, const Tensor& alpha);

struct LevelConvs {
    Conv first;
    Conv second;
};

class NauNetModel {
   public:
    explicit NauNetModel(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }

    struct Trace {
        std::vector<Shape> encoder;
        Shape bottleneck;
        std::vector<Shape> decoder;  // index = level
        std::vector<Tensor> alphas;  // index = level, empty without AG-PE
    };

    // [N, 2, S, S] -> [N, C, S, S]
    Tensor forward(Tape& tape, const Tensor& batch, Trace* trace = nullptr) const;

    // Stable order; names are unique and used by the checkpoint manifest.
    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
    std::vector<Tensor> parameters() const;
    std::size_t parameter_count() const;
    std::size_t attention_parameter_count() const;

    const std::vector<AgPeBlock>& gates() const { return gates_; }

    // Deep copy; the original's handles are not shared.
    NauNetModel clone() const;
    void copy_parameters_from(const NauNetModel& other);
    void for_each_parameter(const std::function<void(Tensor&)>& fn);

   private:
    ModelConfig config_;
    std::vector<LevelConvs> encoder_;
    LevelConvs bottleneck_;
    std::vector<LevelConvs> decoder_;  // index = level
    std::vector<AgPeBlock> gates_;     // index = level
    Conv head_;
};

NauNetModel build_model(const ModelConfig& config);

// Closed-form count from the config alone, no allocation.
std::size_t count_parameters(const ModelConfig& config);

// Uniform(-sqrt(6/fan_in), +sqrt(6/fan_in)) weights, zero biases.
void he_uniform_init(NauNetModel& model, std::uint64_t seed);

std::string config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const std::string& text);

class CheckpointError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// Writes <prefix>.bin (float32 LE, concatenated in named_parameters order) and
// <prefix>.json (config, offsets, shapes, plus caller metadata under "meta").
void save_checkpoint(const NauNetModel& model, const std::string& prefix, const std::string& meta_json = "{}");

struct LoadedCheckpoint {
    NauNetModel model;
    std::string meta_json;
};
LoadedCheckpoint load_checkpoint(const std::string& prefix);

}  // namespace gafnau::net
