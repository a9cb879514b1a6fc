#pragma once

// Analytic input gradients of the encoder blocks and a central-difference
// harness that checks them. Only used for verification; the encoder is
// never trained.

#include "moodpipe/detail/rng.hpp"
#include "moodpipe/encoder.hpp"
#include "moodpipe/error.hpp"
#include "moodpipe/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace moodpipe {

/// d/dx of <upstream, softmax(x)>.
inline std::vector<double> softmax_backward(std::span<const double> probs, std::span<const double> upstream) {
    double dot = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        dot += probs[i] * upstream[i];
    }
    std::vector<double> grad(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        grad[i] = probs[i] * (upstream[i] - dot);
    }
    return grad;
}

struct AttentionGradients {
    Matrix query, key, value;
};

/// Gradients of <upstream, attention(Q, K, V, mask)> with respect to Q, K, V.
inline AttentionGradients attention_backward(const Matrix &q, const Matrix &k, const Matrix &v, std::span<const int> mask,
                                             const Matrix &upstream) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    const Matrix p = attention_weights(q, k, mask);
    AttentionGradients g;
    g.value = matmul(transpose(p), upstream);
    const Matrix dp = matmul_transposed(upstream, v);
    Matrix ds(p.rows(), p.cols());
    for (std::size_t i = 0; i < p.rows(); ++i) {
        const auto row = softmax_backward(p.row(i), dp.row(i));
        for (std::size_t j = 0; j < row.size(); ++j) {
            ds(i, j) = row[j] * scale;
        }
    }
    g.query = matmul(ds, k);
    g.key = matmul(transpose(ds), q);
    return g;
}

/// Gradient of <upstream, layer_norm(x)> with respect to x.
inline std::vector<double> layer_norm_backward(std::span<const double> x, std::span<const double> scale, double epsilon,
                                               std::span<const double> upstream) {
    const auto n = static_cast<double>(x.size());
    double mean = 0.0;
    for (const double v : x) {
        mean += v;
    }
    mean /= n;
    double var = 0.0;
    for (const double v : x) {
        var += (v - mean) * (v - mean);
    }
    var /= n;
    const double inv_std = 1.0 / std::sqrt(var + epsilon);
    std::vector<double> xhat(x.size());
    std::vector<double> dxhat(x.size());
    double mean_dxhat = 0.0;
    double mean_dxhat_xhat = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        xhat[i] = (x[i] - mean) * inv_std;
        dxhat[i] = upstream[i] * scale[i];
        mean_dxhat += dxhat[i];
        mean_dxhat_xhat += dxhat[i] * xhat[i];
    }
    mean_dxhat /= n;
    mean_dxhat_xhat /= n;
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        grad[i] = inv_std * (dxhat[i] - mean_dxhat - xhat[i] * mean_dxhat_xhat);
    }
    return grad;
}

/// Gradient of <upstream, feedforward(x)> with respect to x.
inline Matrix feedforward_backward(const Matrix &x, const Matrix &w1, std::span<const double> b1, const Matrix &w2,
                                   const Matrix &upstream) {
    Matrix pre = matmul(x, w1);
    add_row_bias(pre, b1);
    Matrix dhidden = matmul_transposed(upstream, w2);
    for (std::size_t i = 0; i < dhidden.size(); ++i) {
        dhidden.data()[i] *= gelu_derivative(pre.data()[i]);
    }
    return matmul_transposed(dhidden, w1);
}

// ---------------------------------------------------------------------------

enum class grad_block { softmax, attention_query, attention_key, attention_value, layer_norm, feedforward };

inline constexpr std::string_view to_string(grad_block b) {
    switch (b) {
        case grad_block::softmax:
            return "softmax";
        case grad_block::attention_query:
            return "attention wrt Q";
        case grad_block::attention_key:
            return "attention wrt K";
        case grad_block::attention_value:
            return "attention wrt V";
        case grad_block::layer_norm:
            return "layer norm";
        case grad_block::feedforward:
            return "feedforward";
    }
    return "?";
}

inline constexpr double finite_difference_step = 1e-5;

/// Worst |analytic - numeric| / max(1, |numeric|) over the coordinates of
/// `point`, where numeric is the central difference of `loss`.
inline double compare_gradients(std::vector<double> point, const std::function<double(std::span<const double>)> &loss,
                                std::span<const double> analytic) {
    double worst = 0.0;
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double saved = point[i];
        point[i] = saved + finite_difference_step;
        const double up = loss(point);
        point[i] = saved - finite_difference_step;
        const double down = loss(point);
        point[i] = saved;
        const double numeric = (up - down) / (2.0 * finite_difference_step);
        if (!std::isfinite(up) || !std::isfinite(down) || !std::isfinite(analytic[i])) {
            throw error("gradient check hit a non-finite value");
        }
        worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
    }
    return worst;
}

namespace detail {

inline double sum_of(std::span<const double> v) {
    double s = 0.0;
    for (const double x : v) {
        s += x;
    }
    return s;
}

inline Matrix random_matrix(engine &gen, std::size_t rows, std::size_t cols, double stddev = 1.0) {
    normal_sampler normal(0.0, stddev);
    Matrix m(rows, cols);
    for (double &v : m.data()) {
        v = normal(gen);
    }
    return m;
}

inline std::vector<double> random_vector(engine &gen, std::size_t n, double stddev = 1.0) {
    normal_sampler normal(0.0, stddev);
    std::vector<double> v(n);
    for (double &x : v) {
        x = normal(gen);
    }
    return v;
}

inline Matrix reshape(std::span<const double> flat, std::size_t rows, std::size_t cols) {
    return Matrix(rows, cols, std::vector<double>(flat.begin(), flat.end()));
}

}  // namespace detail

/// Each check uses the sum of the block outputs as the scalar loss.
inline double gradient_check_softmax(std::span<const double> x) {
    const auto p = softmax(x);
    const std::vector<double> ones(p.size(), 1.0);
    const auto analytic = softmax_backward(p, ones);
    return compare_gradients(std::vector<double>(x.begin(), x.end()),
                             [](std::span<const double> pt) { return detail::sum_of(softmax(pt)); }, analytic);
}

inline double gradient_check_attention(const Matrix &q, const Matrix &k, const Matrix &v, std::span<const int> mask,
                                       grad_block wrt) {
    const Matrix ones(q.rows(), v.cols(), 1.0);
    const auto grads = attention_backward(q, k, v, mask, ones);
    const std::vector<int> m(mask.begin(), mask.end());
    switch (wrt) {
        case grad_block::attention_query:
            return compare_gradients(
                {q.data().begin(), q.data().end()},
                [&](std::span<const double> pt) {
                    return detail::sum_of(attention(detail::reshape(pt, q.rows(), q.cols()), k, v, m).data());
                },
                grads.query.data());
        case grad_block::attention_key:
            return compare_gradients(
                {k.data().begin(), k.data().end()},
                [&](std::span<const double> pt) {
                    return detail::sum_of(attention(q, detail::reshape(pt, k.rows(), k.cols()), v, m).data());
                },
                grads.key.data());
        case grad_block::attention_value:
            return compare_gradients(
                {v.data().begin(), v.data().end()},
                [&](std::span<const double> pt) {
                    return detail::sum_of(attention(q, k, detail::reshape(pt, v.rows(), v.cols()), m).data());
                },
                grads.value.data());
        default:
            throw input_error("not an attention gradient block");
    }
}

inline double gradient_check_layer_norm(std::span<const double> x, std::span<const double> scale,
                                        std::span<const double> shift, double epsilon) {
    const std::vector<double> ones(x.size(), 1.0);
    const auto analytic = layer_norm_backward(x, scale, epsilon, ones);
    return compare_gradients(
        {x.begin(), x.end()},
        [&](std::span<const double> pt) {
            std::vector<double> out(pt.size());
            layer_norm(pt, scale, shift, epsilon, out);
            return detail::sum_of(out);
        },
        analytic);
}

inline double gradient_check_feedforward(const Matrix &x, const Matrix &w1, std::span<const double> b1, const Matrix &w2,
                                         std::span<const double> b2) {
    const Matrix ones(x.rows(), w2.cols(), 1.0);
    const Matrix analytic = feedforward_backward(x, w1, b1, w2, ones);
    return compare_gradients(
        {x.data().begin(), x.data().end()},
        [&](std::span<const double> pt) {
            return detail::sum_of(feedforward(detail::reshape(pt, x.rows(), x.cols()), w1, b1, w2, b2).data());
        },
        analytic.data());
}

/// Checks one block at a random point drawn from `seed`.
inline double gradient_check(grad_block block, std::uint64_t seed) {
    detail::engine gen(seed);
    switch (block) {
        case grad_block::softmax:
            return gradient_check_softmax(detail::random_vector(gen, 6, 2.0));
        case grad_block::attention_query:
        case grad_block::attention_key:
        case grad_block::attention_value: {
            constexpr std::size_t n = 3;
            constexpr std::size_t d_k = 4;
            constexpr std::size_t d_v = 3;
            const Matrix q = detail::random_matrix(gen, n, d_k);
            const Matrix k = detail::random_matrix(gen, n, d_k);
            const Matrix v = detail::random_matrix(gen, n, d_v);
            std::vector<int> mask(n, 1);
            mask[detail::uniform_below(gen, n)] = static_cast<int>(detail::uniform_below(gen, 2));
            return gradient_check_attention(q, k, v, mask, block);
        }
        case grad_block::layer_norm: {
            constexpr std::size_t d = 8;
            const auto x = detail::random_vector(gen, d);
            auto scale = detail::random_vector(gen, d);
            const auto shift = detail::random_vector(gen, d);
            return gradient_check_layer_norm(x, scale, shift, 1e-12);
        }
        case grad_block::feedforward: {
            constexpr std::size_t rows = 2;
            constexpr std::size_t d = 6;
            constexpr std::size_t d_ff = 12;
            const Matrix x = detail::random_matrix(gen, rows, d);
            const Matrix w1 = detail::random_matrix(gen, d, d_ff, 0.5);
            const auto b1 = detail::random_vector(gen, d_ff, 0.5);
            const Matrix w2 = detail::random_matrix(gen, d_ff, d, 0.5);
            const auto b2 = detail::random_vector(gen, d, 0.5);
            return gradient_check_feedforward(x, w1, b1, w2, b2);
        }
    }
    throw input_error("unknown gradient block");
}

}  // namespace moodpipe
