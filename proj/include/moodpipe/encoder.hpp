#pragma once

// Post-norm transformer encoder used as a frozen sentence feature extractor.
// Output is the final hidden state at the [CLS] position.

#include "moodpipe/detail/binary_io.hpp"
#include "moodpipe/detail/parallel.hpp"
#include "moodpipe/detail/rng.hpp"
#include "moodpipe/error.hpp"
#include "moodpipe/matrix.hpp"
#include "moodpipe/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace moodpipe {

struct EncoderConfig {
    std::size_t num_layers{2};
    std::size_t d_model{64};
    std::size_t num_heads{4};
    std::size_t d_ff{256};
    std::size_t max_len{128};
    std::size_t vocab_size{0};
    double layernorm_epsilon{1e-12};

    [[nodiscard]] std::size_t head_dim() const noexcept { return d_model / num_heads; }

    void validate() const {
        if (num_layers < 1) {
            throw input_error("encoder num_layers must be >= 1");
        }
        if (num_heads < 1 || d_model == 0 || d_model % num_heads != 0) {
            throw input_error("encoder d_model must be a positive multiple of num_heads");
        }
        if (d_ff < 1) {
            throw input_error("encoder d_ff must be >= 1");
        }
        if (max_len < 3) {
            throw input_error("encoder max_len must be >= 3");
        }
        if (vocab_size < special_pieces.size()) {
            throw input_error("encoder vocab_size must cover the special pieces");
        }
        if (!(layernorm_epsilon > 0.0) || !std::isfinite(layernorm_epsilon)) {
            throw input_error("encoder layernorm_epsilon must be positive");
        }
    }

    /// 12 layers, 768 wide, 12 heads, 3072 feedforward.
    static EncoderConfig full_scale(std::size_t vocab_size, std::size_t max_len) {
        return {12, 768, 12, 3072, max_len, vocab_size, 1e-12};
    }

    friend bool operator==(const EncoderConfig &, const EncoderConfig &) = default;
};

struct EncoderLayerWeights {
    Matrix query, key, value, output;  // d_model x d_model
    std::vector<double> query_bias, key_bias, value_bias, output_bias;
    std::vector<double> attention_norm_scale, attention_norm_shift;
    Matrix ff_in;   // d_model x d_ff
    std::vector<double> ff_in_bias;
    Matrix ff_out;  // d_ff x d_model
    std::vector<double> ff_out_bias;
    std::vector<double> ff_norm_scale, ff_norm_shift;

    friend bool operator==(const EncoderLayerWeights &, const EncoderLayerWeights &) = default;
};

enum class tensor_role { weight, norm_scale, norm_shift };

struct EncoderWeights {
    EncoderConfig config;
    Matrix token_embedding;     // vocab_size x d_model
    Matrix position_embedding;  // max_len x d_model
    std::vector<EncoderLayerWeights> layers;

    EncoderWeights() = default;

    /// Allocates zeroed tensors of the configured shapes.
    explicit EncoderWeights(const EncoderConfig &cfg) : config{cfg} {
        const std::size_t d = cfg.d_model;
        token_embedding = Matrix(cfg.vocab_size, d);
        position_embedding = Matrix(cfg.max_len, d);
        layers.resize(cfg.num_layers);
        for (auto &l : layers) {
            l.query = l.key = l.value = l.output = Matrix(d, d);
            l.query_bias = l.key_bias = l.value_bias = l.output_bias = std::vector<double>(d);
            l.attention_norm_scale = l.ff_norm_scale = std::vector<double>(d, 1.0);
            l.attention_norm_shift = l.ff_norm_shift = std::vector<double>(d, 0.0);
            l.ff_in = Matrix(d, cfg.d_ff);
            l.ff_in_bias = std::vector<double>(cfg.d_ff);
            l.ff_out = Matrix(cfg.d_ff, d);
            l.ff_out_bias = std::vector<double>(d);
        }
    }

    /// Visits every parameter tensor in the fixed serialization order:
    /// token embedding, position embedding, then per layer
    /// Wq bq Wk bk Wv bv Wo bo, attention norm scale/shift,
    /// W1 b1 W2 b2, feedforward norm scale/shift.
    template <typename Self, typename Fn>
    static void visit(Self &self, Fn &&fn) {
        fn(self.token_embedding.data(), tensor_role::weight);
        fn(self.position_embedding.data(), tensor_role::weight);
        for (auto &l : self.layers) {
            fn(l.query.data(), tensor_role::weight);
            fn(std::span(l.query_bias), tensor_role::weight);
            fn(l.key.data(), tensor_role::weight);
            fn(std::span(l.key_bias), tensor_role::weight);
            fn(l.value.data(), tensor_role::weight);
            fn(std::span(l.value_bias), tensor_role::weight);
            fn(l.output.data(), tensor_role::weight);
            fn(std::span(l.output_bias), tensor_role::weight);
            fn(std::span(l.attention_norm_scale), tensor_role::norm_scale);
            fn(std::span(l.attention_norm_shift), tensor_role::norm_shift);
            fn(l.ff_in.data(), tensor_role::weight);
            fn(std::span(l.ff_in_bias), tensor_role::weight);
            fn(l.ff_out.data(), tensor_role::weight);
            fn(std::span(l.ff_out_bias), tensor_role::weight);
            fn(std::span(l.ff_norm_scale), tensor_role::norm_scale);
            fn(std::span(l.ff_norm_shift), tensor_role::norm_shift);
        }
    }

    template <typename Fn>
    void for_each_tensor(Fn &&fn) {
        visit(*this, std::forward<Fn>(fn));
    }
    template <typename Fn>
    void for_each_tensor(Fn &&fn) const {
        visit(*this, std::forward<Fn>(fn));
    }

    [[nodiscard]] std::size_t parameter_count() const {
        std::size_t n = 0;
        for_each_tensor([&](auto t, tensor_role) { n += t.size(); });
        return n;
    }

    friend bool operator==(const EncoderWeights &, const EncoderWeights &) = default;
};

using SentenceEmbedding = std::vector<double>;

/// Normal(0, 0.02^2) draws for every weight and bias in serialization order;
/// layer-norm scales 1 and shifts 0.
inline EncoderWeights init_weights(const EncoderConfig &config, std::uint64_t seed) {
    config.validate();
    EncoderWeights w(config);
    detail::engine gen(seed);
    detail::normal_sampler normal(0.0, 0.02);
    w.for_each_tensor([&](std::span<double> t, tensor_role role) {
        for (double &v : t) {
            switch (role) {
                case tensor_role::weight:
                    v = normal(gen);
                    break;
                case tensor_role::norm_scale:
                    v = 1.0;
                    break;
                case tensor_role::norm_shift:
                    v = 0.0;
                    break;
            }
        }
    });
    return w;
}

// ---------------------------------------------------------------------------
// Building blocks

inline constexpr double masked_score = -std::numeric_limits<double>::infinity();

/// Max-shifted softmax; -inf entries map to exactly 0.
inline std::vector<double> softmax(std::span<const double> row) {
    if (row.empty()) {
        throw input_error("softmax of an empty row");
    }
    const double peak = *std::max_element(row.begin(), row.end());
    if (peak == masked_score) {
        throw input_error("softmax row is fully masked");
    }
    std::vector<double> out(row.size());
    double total = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) {
        out[i] = row[i] == masked_score ? 0.0 : std::exp(row[i] - peak);
        total += out[i];
    }
    for (double &v : out) {
        v /= total;
    }
    return out;
}

namespace detail {

inline void check_mask(std::span<const int> mask, std::size_t n) {
    if (mask.size() != n) {
        throw input_error("attention mask length does not match key count");
    }
    if (std::none_of(mask.begin(), mask.end(), [](int m) { return m != 0; })) {
        throw input_error("attention with every key position masked");
    }
}

}  // namespace detail

/// Row-stochastic weights softmax(Q K^T / sqrt(d_k)) with masked keys at 0.
inline Matrix attention_weights(const Matrix &q, const Matrix &k, std::span<const int> mask) {
    if (q.cols() != k.cols()) {
        throw input_error("query and key widths differ");
    }
    detail::check_mask(mask, k.rows());
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    Matrix scores = matmul_transposed(q, k);
    Matrix weights(q.rows(), k.rows());
    for (std::size_t i = 0; i < q.rows(); ++i) {
        auto s = scores.row(i);
        for (std::size_t j = 0; j < s.size(); ++j) {
            s[j] = mask[j] != 0 ? s[j] * scale : masked_score;
        }
        const auto p = softmax(s);
        std::copy(p.begin(), p.end(), weights.row(i).begin());
    }
    return weights;
}

/// softmax(Q K^T / sqrt(d_k)) V
inline Matrix attention(const Matrix &q, const Matrix &k, const Matrix &v, std::span<const int> mask) {
    if (k.rows() != v.rows()) {
        throw input_error("key and value row counts differ");
    }
    return matmul(attention_weights(q, k, mask), v);
}

/// Population-variance layer norm of one vector.
inline void layer_norm(std::span<const double> x, std::span<const double> scale, std::span<const double> shift,
                       double epsilon, std::span<double> out) {
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
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = (x[i] - mean) * inv_std * scale[i] + shift[i];
    }
}

inline Matrix layer_norm(const Matrix &x, std::span<const double> scale, std::span<const double> shift, double epsilon) {
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        layer_norm(x.row(i), scale, shift, epsilon, out.row(i));
    }
    return out;
}

/// Exact (erf) GELU.
inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

inline double gelu_derivative(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + x * pdf;
}

/// GELU(x W1 + b1) W2 + b2
inline Matrix feedforward(const Matrix &x, const Matrix &w1, std::span<const double> b1, const Matrix &w2,
                          std::span<const double> b2) {
    Matrix hidden = matmul(x, w1);
    add_row_bias(hidden, b1);
    for (double &v : hidden.data()) {
        v = gelu(v);
    }
    Matrix out = matmul(hidden, w2);
    add_row_bias(out, b2);
    return out;
}

namespace detail {

inline Matrix project(const Matrix &x, const Matrix &w, std::span<const double> b) {
    Matrix out = matmul(x, w);
    add_row_bias(out, b);
    return out;
}

inline Matrix leading_rows(const Matrix &m, std::size_t count) {
    Matrix out(count, m.cols());
    std::copy_n(m.data().begin(), count * m.cols(), out.data().begin());
    return out;
}

/// One post-norm encoder layer. Only the first `query_rows` rows are
/// produced; keys and values use every row of `x`.
inline Matrix encoder_layer(const Matrix &x, const EncoderLayerWeights &l, const EncoderConfig &cfg,
                            std::size_t query_rows) {
    const std::size_t d_k = cfg.head_dim();
    const Matrix head_input = leading_rows(x, query_rows);
    const Matrix q = project(head_input, l.query, l.query_bias);
    const Matrix k = project(x, l.key, l.key_bias);
    const Matrix v = project(x, l.value, l.value_bias);
    const std::vector<int> all_keys(x.rows(), 1);

    Matrix concat(query_rows, cfg.d_model);
    for (std::size_t h = 0; h < cfg.num_heads; ++h) {
        const Matrix head = attention(column_block(q, h * d_k, d_k), column_block(k, h * d_k, d_k),
                                      column_block(v, h * d_k, d_k), all_keys);
        for (std::size_t i = 0; i < query_rows; ++i) {
            std::copy(head.row(i).begin(), head.row(i).end(), concat.row(i).begin() + static_cast<std::ptrdiff_t>(h * d_k));
        }
    }
    Matrix attended = project(concat, l.output, l.output_bias);
    for (std::size_t i = 0; i < attended.size(); ++i) {
        attended.data()[i] += head_input.data()[i];
    }
    const Matrix normed = layer_norm(attended, l.attention_norm_scale, l.attention_norm_shift, cfg.layernorm_epsilon);
    Matrix ff = feedforward(normed, l.ff_in, l.ff_in_bias, l.ff_out, l.ff_out_bias);
    for (std::size_t i = 0; i < ff.size(); ++i) {
        ff.data()[i] += normed.data()[i];
    }
    return layer_norm(ff, l.ff_norm_scale, l.ff_norm_shift, cfg.layernorm_epsilon);
}

}  // namespace detail

/// Pooled [CLS] embedding of one token sequence.
///
/// Padded positions (mask 0) are excluded from attention, so they are
/// dropped before the layers run; results for the unmasked rows are the
/// same as running the masked full-length computation.
inline SentenceEmbedding encoder_forward(const TokenSequence &tokens, const EncoderWeights &weights) {
    const EncoderConfig &cfg = weights.config;
    if (tokens.ids.size() != cfg.max_len || tokens.attention_mask.size() != cfg.max_len) {
        throw input_error("token sequence length " + std::to_string(tokens.ids.size()) + " does not match encoder max_len " +
                          std::to_string(cfg.max_len));
    }
    for (const int id : tokens.ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size) {
            throw input_error("token id " + std::to_string(id) + " out of range for vocabulary of " +
                              std::to_string(cfg.vocab_size));
        }
    }
    if (tokens.attention_mask[0] == 0) {
        throw input_error("the pooled position 0 is masked");
    }
    std::vector<std::size_t> positions;
    for (std::size_t i = 0; i < cfg.max_len; ++i) {
        if (tokens.attention_mask[i] != 0) {
            positions.push_back(i);
        }
    }
    Matrix hidden(positions.size(), cfg.d_model);
    for (std::size_t r = 0; r < positions.size(); ++r) {
        const auto tok = weights.token_embedding.row(static_cast<std::size_t>(tokens.ids[positions[r]]));
        const auto pos = weights.position_embedding.row(positions[r]);
        auto out = hidden.row(r);
        for (std::size_t j = 0; j < cfg.d_model; ++j) {
            out[j] = tok[j] + pos[j];
        }
    }
    for (std::size_t layer = 0; layer < cfg.num_layers; ++layer) {
        const bool last = layer + 1 == cfg.num_layers;
        hidden = detail::encoder_layer(hidden, weights.layers[layer], cfg, last ? 1 : hidden.rows());
    }
    const auto cls = hidden.row(0);
    return SentenceEmbedding(cls.begin(), cls.end());
}

/// Embeds sequences in input order; rows are identical for any thread count.
inline Matrix encode_batch(std::span<const TokenSequence> sequences, const EncoderWeights &weights,
                           std::size_t threads = 1) {
    Matrix out(sequences.size(), weights.config.d_model);
    detail::parallel_for(sequences.size(), threads, [&](std::size_t i) {
        const auto e = encoder_forward(sequences[i], weights);
        std::copy(e.begin(), e.end(), out.row(i).begin());
    });
    return out;
}

// ---------------------------------------------------------------------------
// "MPE1" weight file
//
//   magic "MPE1"
//   u32 version (1)
//   u32 num_layers, d_model, num_heads, d_ff, max_len, vocab_size
//   f64 layernorm_epsilon
//   f64[] every tensor in EncoderWeights::visit order, row-major
//
// All scalars little-endian.

inline constexpr std::string_view encoder_magic = "MPE1";
inline constexpr std::uint32_t encoder_format_version = 1;

inline std::string save_encoder(const EncoderWeights &w) {
    detail::byte_writer out;
    out.magic(encoder_magic);
    out.u32(encoder_format_version);
    const auto &c = w.config;
    for (const std::size_t v : {c.num_layers, c.d_model, c.num_heads, c.d_ff, c.max_len, c.vocab_size}) {
        out.u32(static_cast<std::uint32_t>(v));
    }
    out.f64(c.layernorm_epsilon);
    w.for_each_tensor([&](std::span<const double> t, tensor_role) { out.f64s(t); });
    return std::move(out).take();
}

inline EncoderWeights load_encoder(std::string_view bytes) {
    detail::byte_reader in(bytes, "encoder weights");
    in.expect_magic(encoder_magic);
    const std::uint32_t version = in.u32();
    if (version != encoder_format_version) {
        throw version_mismatch_error("encoder weights: unsupported version " + std::to_string(version));
    }
    EncoderConfig c;
    c.num_layers = in.u32();
    c.d_model = in.u32();
    c.num_heads = in.u32();
    c.d_ff = in.u32();
    c.max_len = in.u32();
    c.vocab_size = in.u32();
    c.layernorm_epsilon = in.f64();
    try {
        c.validate();
    } catch (const input_error &e) {
        throw format_error(std::string("encoder weights: invalid header: ") + e.what());
    }
    // Reject headers whose payload cannot possibly be present before allocating.
    const std::size_t d = c.d_model;
    const double expected = static_cast<double>(c.vocab_size * d + c.max_len * d) +
                            static_cast<double>(c.num_layers) *
                                static_cast<double>(4 * d * d + 2 * d * c.d_ff + c.d_ff + 9 * d);
    if (expected * 8.0 > static_cast<double>(in.remaining())) {
        throw truncated_payload_error("encoder weights: truncated payload");
    }
    EncoderWeights w(c);
    w.for_each_tensor([&](std::span<double> t, tensor_role) { in.f64s(t); });
    in.expect_end();
    w.for_each_tensor([&](std::span<const double> t, tensor_role) {
        if (!std::all_of(t.begin(), t.end(), [](double v) { return std::isfinite(v); })) {
            throw format_error("encoder weights: non-finite parameter");
        }
    });
    return w;
}

inline void write_file(const std::filesystem::path &path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
        throw error("cannot write '" + path.string() + "'");
    }
}

inline std::string read_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw input_error("cannot open '" + path.string() + "'");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace moodpipe
