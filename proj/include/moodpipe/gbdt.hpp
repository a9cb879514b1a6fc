#pragma once

// Second-order gradient-boosted regression trees with a softmax multiclass
// objective. One tree per class per round, exact greedy split search,
// L2-regularized leaves and validation-loss early stopping.

#include "moodpipe/detail/binary_io.hpp"
#include "moodpipe/detail/parallel.hpp"
#include "moodpipe/error.hpp"
#include "moodpipe/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace moodpipe {

struct BoostConfig {
    std::size_t num_rounds{500};
    double learning_rate{0.05};
    std::size_t early_stopping_rounds{10};
    std::size_t max_depth{4};
    double lambda{1.0};
    double gamma{0.0};
    double min_child_hessian{1e-3};

    void validate() const {
        if (num_rounds < 1) {
            throw input_error("boost num_rounds must be >= 1");
        }
        if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
            throw input_error("boost learning_rate must lie in (0, 1]");
        }
        if (early_stopping_rounds < 1) {
            throw input_error("boost early_stopping_rounds must be >= 1");
        }
        if (max_depth > 64) {
            throw input_error("boost max_depth must be <= 64");
        }
        if (!(lambda >= 0.0) || !(gamma >= 0.0) || !(min_child_hessian >= 0.0)) {
            throw input_error("boost lambda, gamma and min_child_hessian must be >= 0");
        }
    }

    friend bool operator==(const BoostConfig &, const BoostConfig &) = default;
};

struct GradPair {
    double grad{0.0};
    double hess{0.0};
};

/// Gradient and hessian sums of the instances in a node.
struct SplitStats {
    double G{0.0};
    double H{0.0};

    void add(const GradPair &p) {
        G += p.grad;
        H += p.hess;
    }

    friend bool operator==(const SplitStats &, const SplitStats &) = default;
};

struct SplitParams {
    double lambda{1.0};
    double gamma{0.0};
    double min_child_hessian{1e-3};
};

struct SplitCandidate {
    std::size_t feature{0};
    double threshold{0.0};
    double gain{0.0};
    SplitStats left;
    SplitStats right;
};

/// Per-class (g, h) of softmax cross-entropy: g = p - 1{k=y}, h = p(1 - p).
inline std::vector<GradPair> softmax_grad_hess(std::span<const double> logits, std::size_t true_class) {
    const double peak = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double total = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        p[k] = std::exp(logits[k] - peak);
        total += p[k];
    }
    std::vector<GradPair> out(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) {
        const double pk = p[k] / total;
        out[k] = {pk - (k == true_class ? 1.0 : 0.0), pk * (1.0 - pk)};
    }
    return out;
}

/// Newton-optimal leaf value -G / (H + lambda).
inline double leaf_weight(const SplitStats &stats, double lambda) {
    const double denom = stats.H + lambda;
    if (denom == 0.0) {
        throw input_error("leaf weight undefined: H + lambda = 0");
    }
    return -stats.G / denom;
}

inline double structure_score(const SplitStats &s, double lambda) { return s.G * s.G / (s.H + lambda); }

/// Regularized second-order gain of splitting `parent` into left/right.
inline double split_gain(const SplitStats &left, const SplitStats &right, const SplitStats &parent, double lambda,
                         double gamma) {
    return 0.5 * (structure_score(left, lambda) + structure_score(right, lambda) - structure_score(parent, lambda)) -
           gamma;
}

/// Cut point between two distinct consecutive values a < b such that
/// a < threshold <= b.
inline double split_threshold(double a, double b) {
    const double mid = std::midpoint(a, b);
    return mid > a ? mid : b;
}

namespace detail {

/// Row indices of one node, sorted by value per feature (ties by row).
using SortedColumns = std::vector<std::vector<std::uint32_t>>;

inline SortedColumns sort_columns(const Matrix &x, std::span<const std::uint32_t> rows) {
    SortedColumns cols(x.cols());
    for (std::size_t f = 0; f < x.cols(); ++f) {
        auto &c = cols[f];
        c.assign(rows.begin(), rows.end());
        std::sort(c.begin(), c.end(), [&](std::uint32_t a, std::uint32_t b) {
            const double va = x(a, f);
            const double vb = x(b, f);
            return va < vb || (va == vb && a < b);
        });
    }
    return cols;
}

/// Exact greedy scan. Features ascending, thresholds ascending, strict
/// improvement: ties resolve to the lowest feature, then lowest threshold.
inline std::optional<SplitCandidate> scan_splits(const Matrix &x, std::span<const GradPair> gh, const SortedColumns &cols,
                                                 const SplitStats &node, const SplitParams &params) {
    std::optional<SplitCandidate> best;
    for (std::size_t f = 0; f < cols.size(); ++f) {
        const auto &order = cols[f];
        SplitStats left;
        for (std::size_t i = 0; i + 1 < order.size(); ++i) {
            left.add(gh[order[i]]);
            const double here = x(order[i], f);
            const double next = x(order[i + 1], f);
            if (!(here < next)) {
                continue;
            }
            const SplitStats right{node.G - left.G, node.H - left.H};
            if (left.H < params.min_child_hessian || right.H < params.min_child_hessian) {
                continue;
            }
            const double gain = split_gain(left, right, node, params.lambda, params.gamma);
            if (gain > 0.0 && (!best || gain > best->gain)) {
                best = SplitCandidate{f, split_threshold(here, next), gain, left, right};
            }
        }
    }
    return best;
}

inline SplitStats sum_stats(std::span<const GradPair> gh, std::span<const std::uint32_t> rows_ascending) {
    SplitStats s;
    for (const auto r : rows_ascending) {
        s.add(gh[r]);
    }
    return s;
}

inline void require_finite(const Matrix &x, std::string_view what) {
    for (const double v : x.data()) {
        if (std::isnan(v)) {
            throw input_error(std::string(what) + " contain NaN; missing values are not supported");
        }
        if (!std::isfinite(v)) {
            throw input_error(std::string(what) + " contain a non-finite value");
        }
    }
}

}  // namespace detail

/// Best split of `rows` (all rows when empty) over every feature of `x`, or
/// nullopt when no candidate has positive gain with both children holding at
/// least min_child_hessian.
inline std::optional<SplitCandidate> best_split(const Matrix &x, std::span<const GradPair> gh,
                                                std::span<const std::uint32_t> rows, const SplitParams &params) {
    std::vector<std::uint32_t> ascending(rows.begin(), rows.end());
    if (ascending.empty()) {
        ascending.resize(x.rows());
        std::iota(ascending.begin(), ascending.end(), 0U);
    }
    std::sort(ascending.begin(), ascending.end());
    const auto cols = detail::sort_columns(x, ascending);
    return detail::scan_splits(x, gh, cols, detail::sum_stats(gh, ascending), params);
}

inline std::optional<SplitCandidate> best_split(const Matrix &x, std::span<const GradPair> gh, const SplitParams &params) {
    return best_split(x, gh, {}, params);
}

// ---------------------------------------------------------------------------

struct TreeNode {
    static constexpr std::int32_t leaf = -1;

    std::int32_t feature{leaf};
    double threshold{0.0};
    std::int32_t left{-1};
    std::int32_t right{-1};
    double weight{0.0};

    [[nodiscard]] bool is_leaf() const noexcept { return feature == leaf; }

    friend bool operator==(const TreeNode &, const TreeNode &) = default;
};

/// Array-indexed binary tree; node 0 is the root. Goes left iff
/// value < threshold.
class RegressionTree {
  public:
    RegressionTree() : nodes_{TreeNode{}} {}
    explicit RegressionTree(std::vector<TreeNode> nodes) : nodes_{std::move(nodes)} {}

    [[nodiscard]] const std::vector<TreeNode> &nodes() const noexcept { return nodes_; }
    [[nodiscard]] std::vector<TreeNode> &nodes() noexcept { return nodes_; }

    [[nodiscard]] std::size_t leaf_of(std::span<const double> features) const {
        std::size_t i = 0;
        while (!nodes_[i].is_leaf()) {
            const auto &n = nodes_[i];
            i = static_cast<std::size_t>(features[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right);
        }
        return i;
    }

    [[nodiscard]] double predict(std::span<const double> features) const { return nodes_[leaf_of(features)].weight; }

    [[nodiscard]] std::size_t depth() const { return depth_from(0); }
    [[nodiscard]] std::size_t leaf_count() const {
        return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode &n) { return n.is_leaf(); }));
    }

    friend bool operator==(const RegressionTree &, const RegressionTree &) = default;

  private:
    [[nodiscard]] std::size_t depth_from(std::size_t i) const {
        const auto &n = nodes_[i];
        if (n.is_leaf()) {
            return 0;
        }
        return 1 + std::max(depth_from(static_cast<std::size_t>(n.left)), depth_from(static_cast<std::size_t>(n.right)));
    }

    std::vector<TreeNode> nodes_;
};

namespace detail {

class tree_builder {
  public:
    tree_builder(const Matrix &x, std::span<const GradPair> gh, const BoostConfig &cfg)
        : x_{x}, gh_{gh}, cfg_{cfg}, params_{cfg.lambda, cfg.gamma, cfg.min_child_hessian}, goes_left_(x.rows(), 0) {}

    RegressionTree build(const SortedColumns &root_cols, const std::vector<std::uint32_t> &root_rows) {
        nodes_.clear();
        grow(root_cols, root_rows, 0);
        return RegressionTree(std::move(nodes_));
    }

  private:
    std::int32_t grow(const SortedColumns &cols, const std::vector<std::uint32_t> &rows, std::size_t depth) {
        const auto id = static_cast<std::int32_t>(nodes_.size());
        nodes_.emplace_back();
        const SplitStats stats = sum_stats(gh_, rows);
        std::optional<SplitCandidate> split;
        if (depth < cfg_.max_depth && rows.size() > 1) {
            split = scan_splits(x_, gh_, cols, stats, params_);
        }
        if (!split) {
            nodes_[static_cast<std::size_t>(id)].weight = leaf_weight(stats, cfg_.lambda);
            return id;
        }
        for (const auto r : rows) {
            goes_left_[r] = x_(r, split->feature) < split->threshold ? 1 : 0;
        }
        auto partition = [&](const std::vector<std::uint32_t> &in, bool left_side) {
            std::vector<std::uint32_t> out;
            out.reserve(in.size());
            for (const auto r : in) {
                if ((goes_left_[r] != 0) == left_side) {
                    out.push_back(r);
                }
            }
            return out;
        };
        std::pair<SortedColumns, SortedColumns> child_cols;
        child_cols.first.reserve(cols.size());
        child_cols.second.reserve(cols.size());
        for (const auto &c : cols) {
            child_cols.first.push_back(partition(c, true));
            child_cols.second.push_back(partition(c, false));
        }
        const auto left_rows = partition(rows, true);
        const auto right_rows = partition(rows, false);

        nodes_[static_cast<std::size_t>(id)].feature = static_cast<std::int32_t>(split->feature);
        nodes_[static_cast<std::size_t>(id)].threshold = split->threshold;
        const auto left = grow(child_cols.first, left_rows, depth + 1);
        child_cols.first.clear();
        const auto right = grow(child_cols.second, right_rows, depth + 1);
        nodes_[static_cast<std::size_t>(id)].left = left;
        nodes_[static_cast<std::size_t>(id)].right = right;
        return id;
    }

    const Matrix &x_;
    std::span<const GradPair> gh_;
    const BoostConfig &cfg_;
    SplitParams params_;
    std::vector<char> goes_left_;
    std::vector<TreeNode> nodes_;
};

}  // namespace detail

/// Grows one depth-limited tree on (g, h) over every row of `x`.
inline RegressionTree build_tree(const Matrix &x, std::span<const GradPair> gh, const BoostConfig &cfg) {
    std::vector<std::uint32_t> rows(x.rows());
    std::iota(rows.begin(), rows.end(), 0U);
    const auto cols = detail::sort_columns(x, rows);
    return detail::tree_builder(x, gh, cfg).build(cols, rows);
}

// ---------------------------------------------------------------------------

struct BoostedEnsemble {
    std::size_t num_classes{0};
    std::size_t num_features{0};
    double learning_rate{0.05};
    std::size_t best_iteration{0};  ///< 1-based round count used for prediction
    std::vector<std::string> label_names;
    std::vector<std::vector<RegressionTree>> rounds;  ///< rounds[r][k]

    [[nodiscard]] std::size_t completed_rounds() const noexcept { return rounds.size(); }

    /// Drops every round after `keep`.
    void truncate(std::size_t keep) {
        if (keep < rounds.size()) {
            rounds.resize(keep);
        }
        best_iteration = std::min(best_iteration, rounds.size());
    }

    friend bool operator==(const BoostedEnsemble &, const BoostedEnsemble &) = default;
};

/// Mean multiclass log-loss of logits against labels.
inline double multiclass_log_loss(const Matrix &logits, std::span<const int> labels) {
    double total = 0.0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const auto z = logits.row(i);
        const double peak = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (const double v : z) {
            sum += std::exp(v - peak);
        }
        total += peak + std::log(sum) - z[static_cast<std::size_t>(labels[i])];
    }
    return total / static_cast<double>(logits.rows());
}

struct TrainOptions {
    std::size_t threads{1};
    std::vector<std::string> label_names;
    /// Validation loss after `round` (1-based) given the validation logits.
    /// Defaults to multiclass log-loss.
    std::function<double(std::size_t round, const Matrix &valid_logits)> validation_loss;
    std::function<void(std::size_t round, double loss)> on_round;
};

namespace detail {

inline void check_labels(std::span<const int> labels, std::size_t rows, std::size_t k, std::string_view what) {
    if (labels.size() != rows) {
        throw input_error(std::string(what) + ": label count does not match feature rows");
    }
    for (const int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= k) {
            throw input_error(std::string(what) + ": label " + std::to_string(y) + " outside [0, K)");
        }
    }
}

}  // namespace detail

/// Boosts until num_rounds or until the validation loss has not strictly
/// improved for early_stopping_rounds consecutive rounds. Every completed
/// round is kept; best_iteration marks the prefix with the lowest loss.
inline BoostedEnsemble train_ensemble(const Matrix &train_x, std::span<const int> train_y, const Matrix &valid_x,
                                      std::span<const int> valid_y, const BoostConfig &config, std::size_t num_classes,
                                      const TrainOptions &options = {}) {
    config.validate();
    if (num_classes < 2) {
        throw input_error("boosting needs at least 2 classes");
    }
    if (train_x.rows() == 0) {
        throw input_error("empty training set");
    }
    if (valid_x.rows() == 0) {
        throw input_error("empty validation set");
    }
    if (train_x.cols() != valid_x.cols()) {
        throw input_error("training and validation feature widths differ");
    }
    if (train_x.rows() > std::numeric_limits<std::uint32_t>::max()) {
        throw input_error("training set too large");
    }
    detail::check_labels(train_y, train_x.rows(), num_classes, "training set");
    detail::check_labels(valid_y, valid_x.rows(), num_classes, "validation set");
    detail::require_finite(train_x, "training features");
    detail::require_finite(valid_x, "validation features");

    BoostedEnsemble ensemble;
    ensemble.num_classes = num_classes;
    ensemble.num_features = train_x.cols();
    ensemble.learning_rate = config.learning_rate;
    ensemble.label_names = options.label_names;

    std::vector<std::uint32_t> rows(train_x.rows());
    std::iota(rows.begin(), rows.end(), 0U);
    const auto root_cols = detail::sort_columns(train_x, rows);

    Matrix train_logits(train_x.rows(), num_classes);
    Matrix valid_logits(valid_x.rows(), num_classes);
    std::vector<std::vector<GradPair>> per_class(num_classes, std::vector<GradPair>(train_x.rows()));

    double best_loss = std::numeric_limits<double>::infinity();
    for (std::size_t round = 1; round <= config.num_rounds; ++round) {
        for (std::size_t i = 0; i < train_x.rows(); ++i) {
            const auto gh = softmax_grad_hess(train_logits.row(i), static_cast<std::size_t>(train_y[i]));
            for (std::size_t k = 0; k < num_classes; ++k) {
                per_class[k][i] = gh[k];
            }
        }
        std::vector<RegressionTree> trees(num_classes);
        detail::parallel_for(num_classes, options.threads, [&](std::size_t k) {
            trees[k] = detail::tree_builder(train_x, per_class[k], config).build(root_cols, rows);
        });
        for (std::size_t k = 0; k < num_classes; ++k) {
            for (std::size_t i = 0; i < train_x.rows(); ++i) {
                train_logits(i, k) += config.learning_rate * trees[k].predict(train_x.row(i));
            }
            for (std::size_t i = 0; i < valid_x.rows(); ++i) {
                valid_logits(i, k) += config.learning_rate * trees[k].predict(valid_x.row(i));
            }
        }
        ensemble.rounds.push_back(std::move(trees));

        const double loss = options.validation_loss ? options.validation_loss(round, valid_logits)
                                                    : multiclass_log_loss(valid_logits, valid_y);
        if (options.on_round) {
            options.on_round(round, loss);
        }
        if (loss < best_loss) {
            best_loss = loss;
            ensemble.best_iteration = round;
        } else if (round - ensemble.best_iteration >= config.early_stopping_rounds) {
            break;
        }
    }
    return ensemble;
}

/// Raw logits from the first `rounds` rounds (best_iteration by default).
inline std::vector<double> predict_logits(const BoostedEnsemble &ensemble, std::span<const double> features,
                                          std::optional<std::size_t> rounds = std::nullopt) {
    if (features.size() != ensemble.num_features) {
        throw input_error("feature vector has " + std::to_string(features.size()) + " entries, model expects " +
                          std::to_string(ensemble.num_features));
    }
    for (const double v : features) {
        if (!std::isfinite(v)) {
            throw input_error("feature vector contains a non-finite value");
        }
    }
    const std::size_t used = std::min(rounds.value_or(ensemble.best_iteration), ensemble.rounds.size());
    std::vector<double> logits(ensemble.num_classes, 0.0);
    for (std::size_t r = 0; r < used; ++r) {
        for (std::size_t k = 0; k < ensemble.num_classes; ++k) {
            logits[k] += ensemble.learning_rate * ensemble.rounds[r][k].predict(features);
        }
    }
    return logits;
}

inline std::vector<double> predict_proba(const BoostedEnsemble &ensemble, std::span<const double> features) {
    const auto logits = predict_logits(ensemble, features);
    const double peak = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double total = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        p[k] = std::exp(logits[k] - peak);
        total += p[k];
    }
    for (double &v : p) {
        v /= total;
    }
    return p;
}

inline std::size_t predict_class(const BoostedEnsemble &ensemble, std::span<const double> features) {
    const auto p = predict_proba(ensemble, features);
    return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

// ---------------------------------------------------------------------------
// "MPG1" model file
//
//   magic "MPG1"
//   u32 version (1)
//   u32 num_classes K, u32 rounds, u32 best_iteration
//   f64 learning_rate
//   u32 num_features
//   u32 label count (0 or K), then per label: u32 byte length + UTF-8 bytes
//   rounds x K trees in (round, class) order, each:
//     u32 node count, nodes in pre-order:
//       u8 0 = leaf:  f64 weight
//       u8 1 = split: u32 feature, f64 threshold, then left and right subtrees
//
// All scalars little-endian.

inline constexpr std::string_view model_magic = "MPG1";
inline constexpr std::uint32_t model_format_version = 1;

namespace detail {

inline std::size_t write_subtree(byte_writer &out, const RegressionTree &tree, std::size_t i) {
    const auto &n = tree.nodes()[i];
    if (n.is_leaf()) {
        out.u8(0);
        out.f64(n.weight);
        return 1;
    }
    out.u8(1);
    out.u32(static_cast<std::uint32_t>(n.feature));
    out.f64(n.threshold);
    return 1 + write_subtree(out, tree, static_cast<std::size_t>(n.left)) +
           write_subtree(out, tree, static_cast<std::size_t>(n.right));
}

inline std::size_t count_subtree(const RegressionTree &tree, std::size_t i) {
    const auto &n = tree.nodes()[i];
    if (n.is_leaf()) {
        return 1;
    }
    return 1 + count_subtree(tree, static_cast<std::size_t>(n.left)) + count_subtree(tree, static_cast<std::size_t>(n.right));
}

inline std::int32_t read_subtree(byte_reader &in, std::vector<TreeNode> &nodes, std::size_t limit,
                                 std::size_t num_features, std::size_t depth) {
    if (nodes.size() >= limit) {
        throw format_error("model: tree has more nodes than its declared count");
    }
    if (depth > 64) {
        throw format_error("model: tree nesting too deep");
    }
    const auto id = static_cast<std::int32_t>(nodes.size());
    nodes.emplace_back();
    const std::uint8_t kind = in.u8();
    if (kind == 0) {
        nodes[static_cast<std::size_t>(id)].weight = in.f64();
        return id;
    }
    if (kind != 1) {
        throw format_error("model: unknown node kind " + std::to_string(kind));
    }
    const std::uint32_t feature = in.u32();
    if (feature >= num_features) {
        throw format_error("model: split feature " + std::to_string(feature) + " out of range");
    }
    const double threshold = in.f64();
    nodes[static_cast<std::size_t>(id)].feature = static_cast<std::int32_t>(feature);
    nodes[static_cast<std::size_t>(id)].threshold = threshold;
    const auto left = read_subtree(in, nodes, limit, num_features, depth + 1);
    const auto right = read_subtree(in, nodes, limit, num_features, depth + 1);
    nodes[static_cast<std::size_t>(id)].left = left;
    nodes[static_cast<std::size_t>(id)].right = right;
    return id;
}

}  // namespace detail

inline std::string save_model(const BoostedEnsemble &e) {
    detail::byte_writer out;
    out.magic(model_magic);
    out.u32(model_format_version);
    out.u32(static_cast<std::uint32_t>(e.num_classes));
    out.u32(static_cast<std::uint32_t>(e.rounds.size()));
    out.u32(static_cast<std::uint32_t>(e.best_iteration));
    out.f64(e.learning_rate);
    out.u32(static_cast<std::uint32_t>(e.num_features));
    out.u32(static_cast<std::uint32_t>(e.label_names.size()));
    for (const auto &name : e.label_names) {
        out.str(name);
    }
    for (const auto &round : e.rounds) {
        for (const auto &tree : round) {
            out.u32(static_cast<std::uint32_t>(detail::count_subtree(tree, 0)));
            detail::write_subtree(out, tree, 0);
        }
    }
    return std::move(out).take();
}

inline BoostedEnsemble load_model(std::string_view bytes) {
    detail::byte_reader in(bytes, "model");
    in.expect_magic(model_magic);
    const std::uint32_t version = in.u32();
    if (version != model_format_version) {
        throw version_mismatch_error("model: unsupported version " + std::to_string(version));
    }
    BoostedEnsemble e;
    e.num_classes = in.u32();
    const std::uint32_t rounds = in.u32();
    e.best_iteration = in.u32();
    e.learning_rate = in.f64();
    e.num_features = in.u32();
    if (e.num_classes < 1) {
        throw format_error("model: zero classes");
    }
    if (e.best_iteration > rounds) {
        throw format_error("model: best_iteration exceeds stored rounds");
    }
    if (!(e.learning_rate > 0.0 && e.learning_rate <= 1.0)) {
        throw format_error("model: learning rate outside (0, 1]");
    }
    const std::uint32_t label_count = in.u32();
    if (label_count != 0 && label_count != e.num_classes) {
        throw format_error("model: label count does not match class count");
    }
    for (std::uint32_t i = 0; i < label_count; ++i) {
        e.label_names.push_back(in.str());
    }
    // Each tree needs at least 13 bytes (count + one leaf).
    if (static_cast<double>(rounds) * static_cast<double>(e.num_classes) * 13.0 > static_cast<double>(in.remaining())) {
        throw truncated_payload_error("model: truncated payload");
    }
    e.rounds.resize(rounds);
    for (auto &round : e.rounds) {
        round.reserve(e.num_classes);
        for (std::size_t k = 0; k < e.num_classes; ++k) {
            const std::uint32_t count = in.u32();
            if (count == 0) {
                throw format_error("model: empty tree");
            }
            std::vector<TreeNode> nodes;
            nodes.reserve(std::min<std::size_t>(count, in.remaining()));
            detail::read_subtree(in, nodes, count, e.num_features, 0);
            if (nodes.size() != count) {
                throw format_error("model: tree node count mismatch");
            }
            round.emplace_back(std::move(nodes));
        }
    }
    in.expect_end();
    return e;
}

}  // namespace moodpipe
