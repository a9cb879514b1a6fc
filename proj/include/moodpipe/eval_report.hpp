#pragma once

// Confusion matrix and the precision/recall/f1/support classification report.

#include "moodpipe/error.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

namespace moodpipe {

/// cell(i, j) counts instances of true class i predicted as j.
class ConfusionMatrix {
  public:
    explicit ConfusionMatrix(std::size_t k = 0) : k_{k}, cells_(k * k, 0) {}

    [[nodiscard]] std::size_t num_classes() const noexcept { return k_; }
    [[nodiscard]] std::uint64_t operator()(std::size_t truth, std::size_t pred) const { return cells_[truth * k_ + pred]; }
    std::uint64_t &operator()(std::size_t truth, std::size_t pred) { return cells_[truth * k_ + pred]; }

    [[nodiscard]] std::uint64_t row_sum(std::size_t i) const {
        std::uint64_t s = 0;
        for (std::size_t j = 0; j < k_; ++j) {
            s += (*this)(i, j);
        }
        return s;
    }
    [[nodiscard]] std::uint64_t column_sum(std::size_t j) const {
        std::uint64_t s = 0;
        for (std::size_t i = 0; i < k_; ++i) {
            s += (*this)(i, j);
        }
        return s;
    }
    [[nodiscard]] std::uint64_t trace() const {
        std::uint64_t s = 0;
        for (std::size_t i = 0; i < k_; ++i) {
            s += (*this)(i, i);
        }
        return s;
    }
    [[nodiscard]] std::uint64_t total() const { return std::accumulate(cells_.begin(), cells_.end(), std::uint64_t{0}); }

    friend bool operator==(const ConfusionMatrix &, const ConfusionMatrix &) = default;

  private:
    std::size_t k_;
    std::vector<std::uint64_t> cells_;
};

inline ConfusionMatrix confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred, std::size_t k) {
    if (y_true.size() != y_pred.size()) {
        throw input_error("y_true and y_pred differ in length");
    }
    ConfusionMatrix cm(k);
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const int t = y_true[i];
        const int p = y_pred[i];
        if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= k || static_cast<std::size_t>(p) >= k) {
            throw input_error("class id outside [0, " + std::to_string(k) + ") at position " + std::to_string(i));
        }
        ++cm(static_cast<std::size_t>(t), static_cast<std::size_t>(p));
    }
    return cm;
}

struct ClassMetrics {
    std::size_t index{0};
    std::string name;
    double precision{0.0};
    double recall{0.0};
    double f1{0.0};
    std::uint64_t support{0};
    bool precision_zero_division{false};
    bool recall_zero_division{false};
};

struct AverageMetrics {
    double precision{0.0};
    double recall{0.0};
    double f1{0.0};
    std::uint64_t support{0};
};

struct ClassificationReport {
    std::vector<ClassMetrics> classes;
    double accuracy{0.0};
    std::uint64_t correct{0};
    AverageMetrics macro_avg;
    AverageMetrics weighted_avg;

    [[nodiscard]] bool any_zero_division() const {
        return std::any_of(classes.begin(), classes.end(),
                           [](const ClassMetrics &c) { return c.precision_zero_division || c.recall_zero_division; });
    }
};

inline double f1_score(double precision, double recall) {
    return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

/// Macro (unweighted) and support-weighted means of per-class rows.
inline std::pair<AverageMetrics, AverageMetrics> average_metrics(std::span<const ClassMetrics> rows) {
    AverageMetrics macro;
    AverageMetrics weighted;
    for (const auto &r : rows) {
        macro.precision += r.precision;
        macro.recall += r.recall;
        macro.f1 += r.f1;
        const auto s = static_cast<double>(r.support);
        weighted.precision += r.precision * s;
        weighted.recall += r.recall * s;
        weighted.f1 += r.f1 * s;
        macro.support += r.support;
    }
    weighted.support = macro.support;
    if (!rows.empty()) {
        const auto n = static_cast<double>(rows.size());
        macro.precision /= n;
        macro.recall /= n;
        macro.f1 /= n;
    }
    if (weighted.support > 0) {
        const auto total = static_cast<double>(weighted.support);
        weighted.precision /= total;
        weighted.recall /= total;
        weighted.f1 /= total;
    }
    return {macro, weighted};
}

/// Per-class metrics from a confusion matrix. Empty denominators give 0.0
/// and set the matching zero-division flag.
inline ClassificationReport classification_report(const ConfusionMatrix &cm, std::span<const std::string> names = {}) {
    const std::size_t k = cm.num_classes();
    if (k < 1) {
        throw input_error("classification report needs at least one class");
    }
    if (!names.empty() && names.size() != k) {
        throw input_error("label name count does not match class count");
    }
    const std::uint64_t total = cm.total();
    if (total == 0) {
        throw input_error("classification report of an empty confusion matrix");
    }
    ClassificationReport report;
    for (std::size_t j = 0; j < k; ++j) {
        ClassMetrics m;
        m.index = j;
        m.name = names.empty() ? std::string() : names[j];
        const auto tp = static_cast<double>(cm(j, j));
        const std::uint64_t predicted = cm.column_sum(j);
        m.support = cm.row_sum(j);
        m.precision_zero_division = predicted == 0;
        m.recall_zero_division = m.support == 0;
        m.precision = predicted == 0 ? 0.0 : tp / static_cast<double>(predicted);
        m.recall = m.support == 0 ? 0.0 : tp / static_cast<double>(m.support);
        m.f1 = f1_score(m.precision, m.recall);
        report.classes.push_back(std::move(m));
    }
    report.correct = cm.trace();
    report.accuracy = static_cast<double>(report.correct) / static_cast<double>(total);
    std::tie(report.macro_avg, report.weighted_avg) = average_metrics(report.classes);
    return report;
}

/// Fixed two-decimal rendering, rounding half-up.
inline std::string format_two_decimals(double value) {
    const auto hundredths = static_cast<std::int64_t>(std::floor(value * 100.0 + 0.5 + 1e-9));
    const std::int64_t whole = hundredths / 100;
    const std::int64_t frac = hundredths % 100;
    return fmt::format("{}.{:02d}", whole, frac);
}

/// Fixed-width table: per-class rows, then accuracy, macro avg, weighted avg.
inline std::string render_report(const ClassificationReport &report) {
    std::vector<std::string> labels;
    std::size_t label_width = std::string_view("weighted avg").size();
    for (const auto &c : report.classes) {
        labels.push_back(c.name.empty() ? std::to_string(c.index) : fmt::format("{} {}", c.index, c.name));
        label_width = std::max(label_width, labels.back().size());
    }
    std::string out;
    out += fmt::format("{:>{}} {:>9} {:>9} {:>9} {:>9}\n", "", label_width, "precision", "recall", "f1-score", "support");
    out += '\n';
    for (std::size_t i = 0; i < report.classes.size(); ++i) {
        const auto &c = report.classes[i];
        out += fmt::format("{:>{}} {:>9} {:>9} {:>9} {:>9}\n", labels[i], label_width, format_two_decimals(c.precision),
                           format_two_decimals(c.recall), format_two_decimals(c.f1), c.support);
    }
    out += '\n';
    out += fmt::format("{:>{}} {:>9} {:>9} {:>9} {:>9}\n", "accuracy", label_width, "", "",
                       format_two_decimals(report.accuracy), report.weighted_avg.support);
    for (const auto &[name, avg] : {std::pair<std::string_view, const AverageMetrics &>{"macro avg", report.macro_avg},
                                    std::pair<std::string_view, const AverageMetrics &>{"weighted avg", report.weighted_avg}}) {
        out += fmt::format("{:>{}} {:>9} {:>9} {:>9} {:>9}\n", name, label_width, format_two_decimals(avg.precision),
                           format_two_decimals(avg.recall), format_two_decimals(avg.f1), avg.support);
    }
    return out;
}

inline nlohmann::ordered_json report_to_json(const ClassificationReport &report) {
    nlohmann::ordered_json classes = nlohmann::ordered_json::array();
    for (const auto &c : report.classes) {
        classes.push_back({{"index", c.index},
                           {"name", c.name},
                           {"precision", c.precision},
                           {"recall", c.recall},
                           {"f1-score", c.f1},
                           {"support", c.support},
                           {"precision_zero_division", c.precision_zero_division},
                           {"recall_zero_division", c.recall_zero_division}});
    }
    auto avg = [](const AverageMetrics &a) {
        return nlohmann::ordered_json{
            {"precision", a.precision}, {"recall", a.recall}, {"f1-score", a.f1}, {"support", a.support}};
    };
    return {{"classes", classes},
            {"accuracy", report.accuracy},
            {"correct", report.correct},
            {"macro avg", avg(report.macro_avg)},
            {"weighted avg", avg(report.weighted_avg)}};
}

namespace detail {

inline std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\r\n") == std::string_view::npos) {
        return std::string(s);
    }
    std::string out = "\"";
    for (const char c : s) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    out += '"';
    return out;
}

}  // namespace detail

/// CSV grid with a header row and a leading column of class names.
inline std::string confusion_to_csv(const ConfusionMatrix &cm, std::span<const std::string> names = {}) {
    const std::size_t k = cm.num_classes();
    auto name = [&](std::size_t i) { return names.empty() ? std::to_string(i) : detail::csv_field(names[i]); };
    std::string out = "true\\pred";
    for (std::size_t j = 0; j < k; ++j) {
        out += ',' + name(j);
    }
    out += '\n';
    for (std::size_t i = 0; i < k; ++i) {
        out += name(i);
        for (std::size_t j = 0; j < k; ++j) {
            out += fmt::format(",{}", cm(i, j));
        }
        out += '\n';
    }
    return out;
}

}  // namespace moodpipe
