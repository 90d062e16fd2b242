#include "gafnau/metrics.hpp"

#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <numeric>
#include <stdexcept>

namespace gafnau::metrics {

ConfusionMatrix::ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {
    if (classes == 0) throw std::invalid_argument("confusion matrix needs at least one class");
}

ConfusionMatrix::ConfusionMatrix(std::size_t classes, std::vector<std::uint64_t> counts)
    : classes_(classes), counts_(std::move(counts)) {
    if (classes == 0 || counts_.size() != classes * classes) {
        throw std::invalid_argument("confusion matrix: expected " + std::to_string(classes * classes) + " counts");
    }
}

void ConfusionMatrix::add(int truth, int predicted, std::uint64_t n) {
    const auto c = static_cast<int>(classes_);
    if (truth < 0 || truth >= c || predicted < 0 || predicted >= c) {
        throw std::out_of_range("confusion matrix: class pair (" + std::to_string(truth) + ", " +
                                std::to_string(predicted) + ") outside [0, " + std::to_string(c) + ")");
    }
    counts_[static_cast<std::size_t>(truth) * classes_ + static_cast<std::size_t>(predicted)] += n;
}

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

std::uint64_t ConfusionMatrix::row_sum(std::size_t c) const {
    std::uint64_t s = 0;
    for (std::size_t j = 0; j < classes_; ++j) s += at(c, j);
    return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t c) const {
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < classes_; ++i) s += at(i, c);
    return s;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.classes_ != classes_) throw std::invalid_argument("confusion matrix: class count mismatch in merge");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

Metrics compute_metrics(const ConfusionMatrix& cm) {
    Metrics m;
    const std::size_t c = cm.classes();
    const double total = static_cast<double>(cm.total());
    m.per_class_recall.assign(c, std::numeric_limits<double>::quiet_NaN());
    if (total == 0) {
        m.warnings.push_back("no evaluated pixels");
        for (std::size_t k = 0; k < c; ++k) m.absent_classes.push_back(k);
        return m;
    }
    double trace = 0.0, chance = 0.0, recall_sum = 0.0;
    std::size_t present = 0;
    for (std::size_t k = 0; k < c; ++k) {
        const double row = static_cast<double>(cm.row_sum(k));
        trace += static_cast<double>(cm.at(k, k));
        chance += row * static_cast<double>(cm.col_sum(k));
        if (row == 0) {
            m.absent_classes.push_back(k);
            m.warnings.push_back("class " + std::to_string(k + 1) + " absent; excluded from AA");
            continue;
        }
        m.per_class_recall[k] = static_cast<double>(cm.at(k, k)) / row;
        recall_sum += m.per_class_recall[k];
        ++present;
    }
    m.overall_accuracy = trace / total;
    m.average_accuracy = recall_sum / static_cast<double>(present);
    const double pe = chance / (total * total);
    if (pe >= 1.0) {
        m.kappa = m.overall_accuracy == 1.0 ? 1.0 : 0.0;
    } else {
        m.kappa = (m.overall_accuracy - pe) / (1.0 - pe);
    }
    return m;
}

std::string metrics_to_json(const Metrics& m, const ConfusionMatrix& cm) {
    nlohmann::json j;
    j["OA"] = m.overall_accuracy;
    j["AA"] = m.average_accuracy;
    j["kappa"] = m.kappa;
    nlohmann::json recall = nlohmann::json::array();
    for (double r : m.per_class_recall) recall.push_back(std::isnan(r) ? nlohmann::json(nullptr) : nlohmann::json(r));
    j["per_class_recall"] = std::move(recall);
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < cm.classes(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t k = 0; k < cm.classes(); ++k) row.push_back(cm.at(i, k));
        rows.push_back(std::move(row));
    }
    j["confusion"] = std::move(rows);
    return j.dump(2);
}

int majority_vote(std::span<const double> logits, std::size_t classes, std::size_t positions) {
    if (classes < 2) throw std::invalid_argument("majority_vote needs at least 2 classes");
    if (logits.size() != classes * positions) {
        throw std::invalid_argument("majority_vote: expected " + std::to_string(classes * positions) + " logits, got " +
                                    std::to_string(logits.size()));
    }
    std::vector<std::size_t> tally(classes, 0);
    for (std::size_t p = 0; p < positions; ++p) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < classes; ++k) {
            if (logits[k * positions + p] > logits[best * positions + p]) best = k;
        }
        ++tally[best];
    }
    std::size_t mode = 0;
    for (std::size_t k = 1; k < classes; ++k) {
        if (tally[k] > tally[mode]) mode = k;
    }
    return static_cast<int>(mode);
}

}  // namespace gafnau::metrics
