#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gafnau::metrics {

// Rows are the true class, columns the prediction. Classes are 0-based.
class ConfusionMatrix {
   public:
    explicit ConfusionMatrix(std::size_t classes);
    ConfusionMatrix(std::size_t classes, std::vector<std::uint64_t> counts);

    std::size_t classes() const { return classes_; }
    void add(int truth, int predicted, std::uint64_t n = 1);
    std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * classes_ + predicted]; }
    std::uint64_t total() const;
    std::uint64_t row_sum(std::size_t c) const;
    std::uint64_t col_sum(std::size_t c) const;
    void merge(const ConfusionMatrix& other);

    const std::vector<std::uint64_t>& counts() const { return counts_; }

   private:
    std::size_t classes_;
    std::vector<std::uint64_t> counts_;
};

struct Metrics {
    double overall_accuracy = 0.0;
    double average_accuracy = 0.0;
    double kappa = 0.0;
    std::vector<double> per_class_recall;  // NaN where the class is absent
    std::vector<std::size_t> absent_classes;
    std::vector<std::string> warnings;
};

Metrics compute_metrics(const ConfusionMatrix& cm);

// {"OA", "AA", "kappa", "per_class_recall", "confusion"}; absent recalls are null.
std::string metrics_to_json(const Metrics& m, const ConfusionMatrix& cm);

// Per-position argmax over `classes` channel planes of `positions` cells
// each, then the modal class. Lowest index wins both kinds of tie.
int majority_vote(std::span<const double> logits, std::size_t classes, std::size_t positions);

}  // namespace gafnau::metrics
