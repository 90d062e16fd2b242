#include "gafnau/pe_layer.hpp"

#include <cmath>
#include <stdexcept>

#include "gafnau/ops.hpp"

namespace gafnau::pe {

const char* to_string(SeriesFunction f) {
    switch (f) {
        case SeriesFunction::kArctan:
            return "arctan";
        case SeriesFunction::kSin:
            return "sin";
        case SeriesFunction::kTanh:
            return "tanh";
    }
    return "?";
}

SeriesFunction series_function_from_string(const std::string& name) {
    if (name == "arctan") return SeriesFunction::kArctan;
    if (name == "sin") return SeriesFunction::kSin;
    if (name == "tanh") return SeriesFunction::kTanh;
    throw std::invalid_argument("unknown series function '" + name + "'");
}

PeSpec make_spec(SeriesFunction function, std::size_t terms) {
    if (terms == 0) throw std::invalid_argument("progressive expansion needs at least one term");
    PeSpec spec;
    spec.function = function;
    switch (function) {
        case SeriesFunction::kArctan:
            for (std::size_t m = 0; m < terms; ++m) {
                const int p = static_cast<int>(2 * m + 1);
                spec.coefficients.push_back((m % 2 == 0 ? 1.0 : -1.0) / p);
                spec.powers.push_back(p);
            }
            break;
        case SeriesFunction::kSin: {
            double factorial = 1.0;
            for (std::size_t m = 0; m < terms; ++m) {
                const int p = static_cast<int>(2 * m + 1);
                if (m > 0) factorial *= static_cast<double>((p - 1) * p);
                spec.coefficients.push_back((m % 2 == 0 ? 1.0 : -1.0) / factorial);
                spec.powers.push_back(p);
            }
            break;
        }
        case SeriesFunction::kTanh: {
            // tanh' = 1 - tanh^2 gives (n+1) a_{n+1} = [n == 0] - sum_{i+j=n} a_i a_j.
            const std::size_t max_power = 2 * terms - 1;
            std::vector<double> a(max_power + 1, 0.0);
            a[1] = 1.0;
            for (std::size_t n = 1; n + 1 <= max_power; ++n) {
                double conv = 0.0;
                for (std::size_t i = 0; i <= n; ++i) conv += a[i] * a[n - i];
                a[n + 1] = -conv / static_cast<double>(n + 1);
            }
            for (std::size_t p = 1; p <= max_power; p += 2) {
                spec.coefficients.push_back(a[p]);
                spec.powers.push_back(static_cast<int>(p));
            }
            break;
        }
    }
    return spec;
}

double partial_sum(const PeSpec& spec, std::size_t k, double xi) {
    if (k == 0 || k > spec.terms()) throw std::out_of_range("partial_sum: term index out of range");
    double s = 0.0;
    for (std::size_t m = 0; m < k; ++m) s += spec.coefficients[m] * std::pow(xi, spec.powers[m]);
    return s;
}

namespace {

std::vector<Tensor> partial_sums(Tape& tape, const Tensor& x, const PeSpec& spec) {
    if (spec.terms() == 0 || spec.powers.size() != spec.terms()) {
        throw std::invalid_argument("pe: malformed spec");
    }
    std::vector<Tensor> sums;
    sums.reserve(spec.terms());
    for (std::size_t m = 0; m < spec.terms(); ++m) {
        Tensor term = spec.powers[m] == 1 ? x : ops::power(tape, x, spec.powers[m]);
        if (spec.coefficients[m] != 1.0) term = ops::scale(tape, term, spec.coefficients[m]);
        sums.push_back(sums.empty() ? term : ops::add(tape, sums.back(), term));
    }
    return sums;
}

}  // namespace

Tensor pe_expand(Tape& tape, const Tensor& feature_map, const PeSpec& spec) {
    const std::vector<Tensor> sums = partial_sums(tape, feature_map, spec);
    if (sums.size() == 1) return ops::scale(tape, sums.front(), 1.0);
    return ops::concat_channels(tape, sums);
}

Tensor pe_series(Tape& tape, const Tensor& feature_map, const PeSpec& spec) {
    return partial_sums(tape, feature_map, spec).back();
}

}  // namespace gafnau::pe
