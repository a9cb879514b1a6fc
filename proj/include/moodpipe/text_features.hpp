#pragma once

// Per-statement text metrics, class distribution and metric correlations.

#include "moodpipe/corpus.hpp"
#include "moodpipe/error.hpp"
#include "moodpipe/unicode.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace moodpipe {

struct TextMetrics {
    std::size_t statement_length{0};  ///< Unicode scalar values
    std::size_t num_words{0};         ///< maximal non-whitespace runs
    double avg_word_length{0.0};      ///< mean scalar values per word
    std::size_t vocabulary_size{0};   ///< distinct lowercased words

    friend bool operator==(const TextMetrics &, const TextMetrics &) = default;
};

inline constexpr std::array<std::string_view, 4> text_metric_names{"statement_length", "num_words", "avg_word_length",
                                                                  "vocabulary_size"};

inline TextMetrics extract_text_metrics(std::string_view text) {
    TextMetrics m;
    m.statement_length = unicode::length(text);
    const auto words = unicode::split_whitespace(text);
    m.num_words = words.size();
    if (words.empty()) {
        return m;
    }
    std::size_t total_chars = 0;
    std::set<std::string> distinct;
    for (const auto &w : words) {
        total_chars += unicode::length(w);
        distinct.insert(unicode::to_lower(w));
    }
    m.avg_word_length = static_cast<double>(total_chars) / static_cast<double>(words.size());
    m.vocabulary_size = distinct.size();
    return m;
}

struct ClassShare {
    std::string name;
    std::size_t count{0};
    std::int64_t percentage_tenths{0};  ///< 100*count/total in tenths, rounded half-up
    double percentage{0.0};             ///< percentage_tenths / 10

    friend bool operator==(const ClassShare &, const ClassShare &) = default;
};

struct ClassDistribution {
    std::vector<ClassShare> entries;  ///< descending count, then name
    std::size_t total{0};
};

/// Rounds 1000*count/total half-up in exact integer arithmetic.
inline std::int64_t percentage_tenths(std::size_t count, std::size_t total) {
    const auto c = static_cast<std::int64_t>(count);
    const auto t = static_cast<std::int64_t>(total);
    return (2000 * c + t) / (2 * t);
}

inline ClassDistribution class_distribution(const DatasetTable &table) {
    if (table.empty()) {
        throw input_error("class distribution of an empty dataset");
    }
    std::map<std::string, std::size_t> counts;
    for (const auto &r : table.records) {
        ++counts[r.label];
    }
    ClassDistribution dist;
    dist.total = table.size();
    for (const auto &[name, count] : counts) {
        const auto tenths = percentage_tenths(count, dist.total);
        dist.entries.push_back({name, count, tenths, static_cast<double>(tenths) / 10.0});
    }
    std::stable_sort(dist.entries.begin(), dist.entries.end(),
                     [](const ClassShare &a, const ClassShare &b) { return a.count > b.count; });
    return dist;
}

template <std::size_t N>
struct CorrelationMatrix {
    std::array<std::array<double, N>, N> values{};
    std::array<bool, N> degenerate{};  ///< column had zero variance

    [[nodiscard]] double operator()(std::size_t i, std::size_t j) const { return values[i][j]; }
    [[nodiscard]] bool any_degenerate() const {
        return std::any_of(degenerate.begin(), degenerate.end(), [](bool b) { return b; });
    }
};

/// Pearson product-moment coefficients between every pair of columns.
/// A zero-variance column correlates 0 with the others and 1 with itself.
template <std::size_t N>
CorrelationMatrix<N> pearson_correlation(const std::array<std::span<const double>, N> &columns) {
    const std::size_t n = columns[0].size();
    for (const auto &c : columns) {
        if (c.size() != n) {
            throw input_error("correlation columns differ in length");
        }
    }
    if (n < 2) {
        throw input_error("correlation needs at least 2 observations");
    }
    std::array<std::vector<double>, N> centered;
    std::array<double, N> sum_sq{};
    for (std::size_t k = 0; k < N; ++k) {
        double mean = 0.0;
        for (const double x : columns[k]) {
            mean += x;
        }
        mean /= static_cast<double>(n);
        centered[k].resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            centered[k][i] = columns[k][i] - mean;
            sum_sq[k] += centered[k][i] * centered[k][i];
        }
    }
    CorrelationMatrix<N> out;
    for (std::size_t k = 0; k < N; ++k) {
        out.degenerate[k] = !(sum_sq[k] > 0.0);
    }
    for (std::size_t a = 0; a < N; ++a) {
        out.values[a][a] = 1.0;
        for (std::size_t b = a + 1; b < N; ++b) {
            double r = 0.0;
            if (!out.degenerate[a] && !out.degenerate[b]) {
                double cross = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    cross += centered[a][i] * centered[b][i];
                }
                r = std::clamp(cross / std::sqrt(sum_sq[a] * sum_sq[b]), -1.0, 1.0);
            }
            out.values[a][b] = r;
            out.values[b][a] = r;
        }
    }
    return out;
}

template <std::size_t N>
CorrelationMatrix<N> pearson_correlation(const std::array<std::vector<double>, N> &columns) {
    std::array<std::span<const double>, N> views;
    for (std::size_t k = 0; k < N; ++k) {
        views[k] = columns[k];
    }
    return pearson_correlation<N>(views);
}

/// Metric columns in text_metric_names order.
inline std::array<std::vector<double>, 4> metric_columns(std::span<const TextMetrics> metrics) {
    std::array<std::vector<double>, 4> cols;
    for (auto &c : cols) {
        c.reserve(metrics.size());
    }
    for (const auto &m : metrics) {
        cols[0].push_back(static_cast<double>(m.statement_length));
        cols[1].push_back(static_cast<double>(m.num_words));
        cols[2].push_back(m.avg_word_length);
        cols[3].push_back(static_cast<double>(m.vocabulary_size));
    }
    return cols;
}

}  // namespace moodpipe
