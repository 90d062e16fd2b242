#pragma once

#include <string>
#include <vector>

#include "gafnau/tensor.hpp"

// Progressive expansion: parameter-free partial sums of a Maclaurin series
// applied element-wise to a feature map.
namespace gafnau::pe {

enum class SeriesFunction { kArctan, kSin, kTanh };

const char* to_string(SeriesFunction f);
SeriesFunction series_function_from_string(const std::string& name);

struct PeSpec {
    SeriesFunction function = SeriesFunction::kArctan;
    std::vector<double> coefficients;  // c_1..c_K
    std::vector<int> powers;           // p_1..p_K, odd and increasing

    std::size_t terms() const { return coefficients.size(); }
};

// First `terms` nonzero Maclaurin terms of `function`.
PeSpec make_spec(SeriesFunction function = SeriesFunction::kArctan, std::size_t terms = 2);

// Scalar partial sum through `k` terms (1 <= k <= spec.terms()).
double partial_sum(const PeSpec& spec, std::size_t k, double xi);

// [N, C, H, W] -> [N, C*K, H, W]: S_1..S_K stacked along channels in
// ascending k, where S_k = sum_{m<=k} c_m xi^{p_m}.
Tensor pe_expand(Tape& tape, const Tensor& feature_map, const PeSpec& spec);

// S_K alone, same shape as the input.
Tensor pe_series(Tape& tape, const Tensor& feature_map, const PeSpec& spec);

constexpr std::size_t pe_param_count(const PeSpec&) { return 0; }

}  // namespace gafnau::pe
