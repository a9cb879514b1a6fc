#pragma once

// Pipeline configuration: JSON with a fixed key set, unknown keys rejected.
//
// {
//   "dataset_path": "data/statements.jsonl",   (required; relative to the config file)
//   "output_dir": "model",
//   "test_fraction": 0.2,
//   "valid_fraction": 0.1,
//   "seed": 42,
//   "tokenizer": { "max_len": 128, "vocab_max_size": 8000, "min_freq": 2 },
//   "encoder":   { "num_layers": 2, "d_model": 64, "num_heads": 4, "d_ff": 256,
//                  "layernorm_epsilon": 1e-12 },
//   "boost":     { "num_rounds": 500, "learning_rate": 0.05, "early_stopping_rounds": 10,
//                  "max_depth": 4, "lambda": 1.0, "gamma": 0.0, "min_child_hessian": 0.001 }
// }

#include "moodpipe/encoder.hpp"
#include "moodpipe/error.hpp"
#include "moodpipe/gbdt.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <string_view>

namespace moodpipe {

struct TokenizerSettings {
    std::size_t max_len{128};
    std::size_t vocab_max_size{8000};
    std::size_t min_freq{2};

    friend bool operator==(const TokenizerSettings &, const TokenizerSettings &) = default;
};

struct PipelineConfig {
    std::filesystem::path dataset_path;
    std::filesystem::path output_dir{"model"};
    double test_fraction{0.2};
    double valid_fraction{0.1};
    std::uint64_t seed{42};
    TokenizerSettings tokenizer;
    EncoderConfig encoder;  ///< max_len and vocab_size are filled in at train time
    BoostConfig boost;

    void validate() const {
        if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
            throw input_error("test_fraction must lie in (0, 1)");
        }
        if (!(valid_fraction > 0.0 && valid_fraction < 1.0)) {
            throw input_error("valid_fraction must lie in (0, 1)");
        }
        if (tokenizer.max_len < 3) {
            throw input_error("tokenizer.max_len must be >= 3");
        }
        EncoderConfig probe = encoder;
        probe.max_len = tokenizer.max_len;
        probe.vocab_size = tokenizer.vocab_max_size;
        probe.validate();
        boost.validate();
    }
};

namespace detail {

inline void reject_unknown(const nlohmann::json &obj, std::string_view where, std::initializer_list<std::string_view> keys) {
    if (!obj.is_object()) {
        throw input_error("config: '" + std::string(where) + "' must be an object");
    }
    const std::set<std::string_view> known(keys);
    for (const auto &[key, value] : obj.items()) {
        if (!known.contains(key)) {
            throw input_error("config: unknown key '" + (where.empty() ? key : std::string(where) + "." + key) + "'");
        }
    }
}

template <typename T>
void read_key(const nlohmann::json &obj, const char *key, T &out, std::string_view where) {
    const auto it = obj.find(key);
    if (it == obj.end()) {
        return;
    }
    try {
        if constexpr (std::is_integral_v<T>) {
            if (!it->is_number_integer() || (it->is_number_integer() && !it->is_number_unsigned() && it->get<std::int64_t>() < 0)) {
                throw input_error("expected a non-negative integer");
            }
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!it->is_number()) {
                throw input_error("expected a number");
            }
        }
        out = it->get<T>();
    } catch (const std::exception &e) {
        throw input_error("config: '" + (where.empty() ? std::string(key) : std::string(where) + "." + key) + "': " + e.what());
    }
}

}  // namespace detail

/// Parses a config document. Relative paths resolve against `base_dir`.
inline PipelineConfig parse_config(const nlohmann::json &doc, const std::filesystem::path &base_dir = {}) {
    detail::reject_unknown(doc, "",
                           {"dataset_path", "output_dir", "test_fraction", "valid_fraction", "seed", "tokenizer", "encoder",
                            "boost"});
    PipelineConfig cfg;
    std::string dataset;
    std::string output = cfg.output_dir.string();
    if (!doc.contains("dataset_path")) {
        throw input_error("config: missing key 'dataset_path'");
    }
    detail::read_key(doc, "dataset_path", dataset, "");
    detail::read_key(doc, "output_dir", output, "");
    detail::read_key(doc, "test_fraction", cfg.test_fraction, "");
    detail::read_key(doc, "valid_fraction", cfg.valid_fraction, "");
    detail::read_key(doc, "seed", cfg.seed, "");
    cfg.dataset_path = std::filesystem::path(dataset).is_absolute() ? std::filesystem::path(dataset) : base_dir / dataset;
    cfg.output_dir = std::filesystem::path(output).is_absolute() ? std::filesystem::path(output) : base_dir / output;

    if (const auto it = doc.find("tokenizer"); it != doc.end()) {
        detail::reject_unknown(*it, "tokenizer", {"max_len", "vocab_max_size", "min_freq"});
        detail::read_key(*it, "max_len", cfg.tokenizer.max_len, "tokenizer");
        detail::read_key(*it, "vocab_max_size", cfg.tokenizer.vocab_max_size, "tokenizer");
        detail::read_key(*it, "min_freq", cfg.tokenizer.min_freq, "tokenizer");
    }
    if (const auto it = doc.find("encoder"); it != doc.end()) {
        detail::reject_unknown(*it, "encoder", {"num_layers", "d_model", "num_heads", "d_ff", "layernorm_epsilon"});
        detail::read_key(*it, "num_layers", cfg.encoder.num_layers, "encoder");
        detail::read_key(*it, "d_model", cfg.encoder.d_model, "encoder");
        detail::read_key(*it, "num_heads", cfg.encoder.num_heads, "encoder");
        detail::read_key(*it, "d_ff", cfg.encoder.d_ff, "encoder");
        detail::read_key(*it, "layernorm_epsilon", cfg.encoder.layernorm_epsilon, "encoder");
    }
    if (const auto it = doc.find("boost"); it != doc.end()) {
        detail::reject_unknown(*it, "boost",
                               {"num_rounds", "learning_rate", "early_stopping_rounds", "max_depth", "lambda", "gamma",
                                "min_child_hessian"});
        detail::read_key(*it, "num_rounds", cfg.boost.num_rounds, "boost");
        detail::read_key(*it, "learning_rate", cfg.boost.learning_rate, "boost");
        detail::read_key(*it, "early_stopping_rounds", cfg.boost.early_stopping_rounds, "boost");
        detail::read_key(*it, "max_depth", cfg.boost.max_depth, "boost");
        detail::read_key(*it, "lambda", cfg.boost.lambda, "boost");
        detail::read_key(*it, "gamma", cfg.boost.gamma, "boost");
        detail::read_key(*it, "min_child_hessian", cfg.boost.min_child_hessian, "boost");
    }
    cfg.encoder.max_len = cfg.tokenizer.max_len;
    cfg.validate();
    return cfg;
}

inline PipelineConfig load_config(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw input_error("cannot open config '" + path.string() + "'");
    }
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error &e) {
        throw input_error("config '" + path.string() + "': " + e.what());
    }
    return parse_config(doc, path.parent_path());
}

/// Everything that determines the trained artifacts. The output directory
/// is left out so runs into different directories snapshot identically.
inline nlohmann::ordered_json config_snapshot(const PipelineConfig &cfg) {
    return {{"dataset_path", cfg.dataset_path.generic_string()},
            {"test_fraction", cfg.test_fraction},
            {"valid_fraction", cfg.valid_fraction},
            {"seed", cfg.seed},
            {"tokenizer",
             {{"max_len", cfg.tokenizer.max_len},
              {"vocab_max_size", cfg.tokenizer.vocab_max_size},
              {"min_freq", cfg.tokenizer.min_freq}}},
            {"encoder",
             {{"num_layers", cfg.encoder.num_layers},
              {"d_model", cfg.encoder.d_model},
              {"num_heads", cfg.encoder.num_heads},
              {"d_ff", cfg.encoder.d_ff},
              {"layernorm_epsilon", cfg.encoder.layernorm_epsilon}}},
            {"boost",
             {{"num_rounds", cfg.boost.num_rounds},
              {"learning_rate", cfg.boost.learning_rate},
              {"early_stopping_rounds", cfg.boost.early_stopping_rounds},
              {"max_depth", cfg.boost.max_depth},
              {"lambda", cfg.boost.lambda},
              {"gamma", cfg.boost.gamma},
              {"min_child_hessian", cfg.boost.min_child_hessian}}}};
}

}  // namespace moodpipe
