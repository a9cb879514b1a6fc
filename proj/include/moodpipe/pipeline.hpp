#pragma once

// End-to-end train / predict / stats orchestration over the library modules.

#include "moodpipe/config.hpp"
#include "moodpipe/corpus.hpp"
#include "moodpipe/encoder.hpp"
#include "moodpipe/error.hpp"
#include "moodpipe/eval_report.hpp"
#include "moodpipe/gbdt.hpp"
#include "moodpipe/text_features.hpp"
#include "moodpipe/tokenizer.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace moodpipe {

/// Failure of one named pipeline stage. `input_related` is set when the
/// cause was bad user input rather than an internal fault.
class stage_error : public error {
  public:
    stage_error(std::string stage, const std::string &what, bool input_related)
        : error(stage + ": " + what), stage_{std::move(stage)}, input_related_{input_related} {}

    [[nodiscard]] const std::string &stage() const noexcept { return stage_; }
    [[nodiscard]] bool input_related() const noexcept { return input_related_; }

  private:
    std::string stage_;
    bool input_related_;
};

namespace detail {

template <typename Fn>
auto run_stage(std::string_view stage, Fn &&fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const stage_error &) {
        throw;
    } catch (const input_error &e) {
        throw stage_error(std::string(stage), e.what(), true);
    } catch (const std::exception &e) {
        throw stage_error(std::string(stage), e.what(), false);
    }
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 finalizer over (seed, stream)
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::vector<TokenSequence> tokenize_all(const DatasetTable &table, const SubwordVocabulary &vocab,
                                               std::size_t max_len) {
    std::vector<TokenSequence> out;
    out.reserve(table.size());
    for (const auto &r : table.records) {
        out.push_back(tokenize(r.text, vocab, max_len));
    }
    return out;
}

}  // namespace detail

namespace artifact {
inline constexpr std::string_view report_txt = "report.txt";
inline constexpr std::string_view report_json = "report.json";
inline constexpr std::string_view confusion_csv = "confusion.csv";
inline constexpr std::string_view vocab_txt = "vocab.txt";
inline constexpr std::string_view encoder_bin = "encoder.bin";
inline constexpr std::string_view model_bin = "model.bin";
inline constexpr std::string_view config_snapshot_json = "config.snapshot.json";
}  // namespace artifact

struct RunOptions {
    std::size_t threads{1};
    std::function<void(std::string_view)> log;
};

struct TrainSummary {
    ClassificationReport report;
    ConfusionMatrix confusion;
    LabelVocabulary labels;
    std::size_t train_size{0};
    std::size_t valid_size{0};
    std::size_t test_size{0};
    std::size_t vocab_size{0};
    std::size_t completed_rounds{0};
    std::size_t best_iteration{0};
};

/// parse -> labels -> split -> vocab (train only) -> encoder init -> embed
/// -> carve validation -> boost -> evaluate on test -> write artifacts.
inline TrainSummary train_pipeline(const PipelineConfig &config, const RunOptions &options = {}) {
    auto log = [&](std::string_view msg) {
        if (options.log) {
            options.log(msg);
        }
    };
    detail::run_stage("config", [&] { config.validate(); });
    TrainSummary summary;

    auto table = detail::run_stage("load", [&] {
        if (!std::filesystem::exists(config.dataset_path)) {
            throw input_error("dataset file '" + config.dataset_path.string() + "' does not exist");
        }
        return load_dataset(config.dataset_path);
    });
    auto [labels, encoded] = detail::run_stage("labels", [&] { return encode_labels(std::move(table)); });
    if (labels.size() < 2) {
        throw stage_error("labels", "dataset has a single class; at least 2 are needed", true);
    }
    auto [train_all, test] = detail::run_stage(
        "split", [&] { return stratified_split(encoded, config.test_fraction, detail::derive_seed(config.seed, 0)); });
    auto [train, valid] = detail::run_stage(
        "split", [&] { return stratified_split(train_all, config.valid_fraction, detail::derive_seed(config.seed, 1)); });
    log(fmt::format("{} records, {} classes: train {}, valid {}, test {}", encoded.size(), labels.size(), train.size(),
                    valid.size(), test.size()));

    const auto vocab = detail::run_stage("vocab", [&] {
        std::vector<std::string> normalized;
        normalized.reserve(train_all.size());
        for (const auto &r : train_all.records) {
            normalized.push_back(normalize(r.text));
        }
        return build_vocab(normalized, config.tokenizer.vocab_max_size, config.tokenizer.min_freq);
    });
    log(fmt::format("vocabulary: {} pieces", vocab.size()));

    const auto weights = detail::run_stage("encoder", [&] {
        EncoderConfig enc = config.encoder;
        enc.max_len = config.tokenizer.max_len;
        enc.vocab_size = vocab.size();
        return init_weights(enc, detail::derive_seed(config.seed, 2));
    });

    auto embed = [&](const DatasetTable &t) {
        return detail::run_stage("embed", [&] {
            const auto seqs = detail::tokenize_all(t, vocab, config.tokenizer.max_len);
            return encode_batch(seqs, weights, options.threads);
        });
    };
    const Matrix train_x = embed(train);
    const Matrix valid_x = embed(valid);
    const Matrix test_x = embed(test);
    log("embedded all splits");

    const auto ensemble = detail::run_stage("boost", [&] {
        TrainOptions opts;
        opts.threads = options.threads;
        opts.label_names = labels.names();
        return train_ensemble(train_x, train.labels_encoded, valid_x, valid.labels_encoded, config.boost, labels.size(),
                              opts);
    });
    log(fmt::format("boosting: {} rounds completed, best iteration {}", ensemble.completed_rounds(),
                    ensemble.best_iteration));

    detail::run_stage("evaluate", [&] {
        std::vector<int> predicted(test.size());
        for (std::size_t i = 0; i < test.size(); ++i) {
            predicted[i] = static_cast<int>(predict_class(ensemble, test_x.row(i)));
        }
        summary.confusion = confusion_matrix(test.labels_encoded, predicted, labels.size());
        summary.report = classification_report(summary.confusion, labels.names());
    });

    detail::run_stage("write", [&] {
        const auto &dir = config.output_dir;
        std::filesystem::create_directories(dir);
        write_file(dir / artifact::report_txt, render_report(summary.report));
        write_file(dir / artifact::report_json, report_to_json(summary.report).dump(2) + "\n");
        write_file(dir / artifact::confusion_csv, confusion_to_csv(summary.confusion, labels.names()));
        vocab.save(dir / artifact::vocab_txt);
        write_file(dir / artifact::encoder_bin, save_encoder(weights));
        write_file(dir / artifact::model_bin, save_model(ensemble));
        write_file(dir / artifact::config_snapshot_json, config_snapshot(config).dump(2) + "\n");
    });

    summary.labels = labels;
    summary.train_size = train.size();
    summary.valid_size = valid.size();
    summary.test_size = test.size();
    summary.vocab_size = vocab.size();
    summary.completed_rounds = ensemble.completed_rounds();
    summary.best_iteration = ensemble.best_iteration;
    return summary;
}

// ---------------------------------------------------------------------------

struct TrainedModel {
    SubwordVocabulary vocab;
    EncoderWeights encoder;
    BoostedEnsemble ensemble;

    [[nodiscard]] std::size_t max_len() const noexcept { return encoder.config.max_len; }
};

/// Loads a trained model directory and checks the components agree.
inline TrainedModel load_trained_model(const std::filesystem::path &dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw input_error("model directory '" + dir.string() + "' does not exist");
    }
    TrainedModel m;
    m.vocab = SubwordVocabulary::load(dir / artifact::vocab_txt);
    m.encoder = load_encoder(read_file(dir / artifact::encoder_bin));
    m.ensemble = load_model(read_file(dir / artifact::model_bin));
    if (m.vocab.size() != m.encoder.config.vocab_size) {
        throw format_error(fmt::format("vocabulary has {} pieces but the encoder expects {}", m.vocab.size(),
                                       m.encoder.config.vocab_size));
    }
    if (m.encoder.config.d_model != m.ensemble.num_features) {
        throw format_error(fmt::format("encoder produces {}-d embeddings but the ensemble expects {} features",
                                       m.encoder.config.d_model, m.ensemble.num_features));
    }
    if (m.ensemble.label_names.size() != m.ensemble.num_classes) {
        throw format_error("ensemble carries no label names");
    }
    return m;
}

struct Prediction {
    std::size_t label{0};
    std::string name;
    std::vector<double> probabilities;
};

inline Prediction predict_text(const TrainedModel &model, std::string_view text) {
    if (unicode::trim(text).empty()) {
        throw input_error("empty input text");
    }
    const auto seq = tokenize(text, model.vocab, model.max_len());
    const auto embedding = encoder_forward(seq, model.encoder);
    Prediction p;
    p.probabilities = predict_proba(model.ensemble, embedding);
    p.label = static_cast<std::size_t>(std::max_element(p.probabilities.begin(), p.probabilities.end()) -
                                       p.probabilities.begin());
    p.name = model.ensemble.label_names[p.label];
    return p;
}

/// "<name>\t<p_0> ... <p_K-1>" with four decimals.
inline std::string format_prediction(const Prediction &p) {
    std::string out = p.name + '\t';
    for (std::size_t k = 0; k < p.probabilities.size(); ++k) {
        out += fmt::format("{}{:.4f}", k == 0 ? "" : " ", p.probabilities[k]);
    }
    return out;
}

// ---------------------------------------------------------------------------

struct MetricSummary {
    double mean{0.0};
    double min{0.0};
    double max{0.0};
};

struct DatasetStats {
    ClassDistribution distribution;
    std::array<MetricSummary, 4> metrics{};
    CorrelationMatrix<4> correlation;
    bool correlation_defined{false};  ///< false with fewer than 2 records
};

inline DatasetStats compute_stats(const DatasetTable &table) {
    if (table.empty()) {
        throw input_error("dataset is empty");
    }
    DatasetStats s;
    s.distribution = class_distribution(table);
    std::vector<TextMetrics> metrics;
    metrics.reserve(table.size());
    for (const auto &r : table.records) {
        metrics.push_back(extract_text_metrics(r.text));
    }
    const auto cols = metric_columns(metrics);
    for (std::size_t k = 0; k < cols.size(); ++k) {
        const auto &c = cols[k];
        double sum = 0.0;
        for (const double v : c) {
            sum += v;
        }
        const auto [lo, hi] = std::minmax_element(c.begin(), c.end());
        s.metrics[k] = {sum / static_cast<double>(c.size()), *lo, *hi};
    }
    if (table.size() >= 2) {
        s.correlation = pearson_correlation<4>(cols);
        s.correlation_defined = true;
    } else {
        for (std::size_t k = 0; k < 4; ++k) {
            s.correlation.values[k][k] = 1.0;
            s.correlation.degenerate[k] = true;
        }
    }
    return s;
}

inline std::string render_stats(const DatasetStats &s) {
    std::size_t name_width = 10;
    for (const auto &e : s.distribution.entries) {
        name_width = std::max(name_width, e.name.size());
    }
    std::string out = fmt::format("class distribution ({} records)\n", s.distribution.total);
    for (const auto &e : s.distribution.entries) {
        out += fmt::format("  {:<{}} {:>8} {:>6.1f}%\n", e.name, name_width, e.count, e.percentage);
    }
    out += fmt::format("\ntext metrics\n  {:<18} {:>12} {:>12} {:>12}\n", "", "mean", "min", "max");
    for (std::size_t k = 0; k < 4; ++k) {
        out += fmt::format("  {:<18} {:>12.4f} {:>12.4f} {:>12.4f}\n", text_metric_names[k], s.metrics[k].mean,
                           s.metrics[k].min, s.metrics[k].max);
    }
    out += fmt::format("\ncorrelation matrix\n  {:<18}", "");
    for (const auto name : text_metric_names) {
        out += fmt::format(" {:>17}", name);
    }
    out += '\n';
    for (std::size_t i = 0; i < 4; ++i) {
        out += fmt::format("  {:<18}", text_metric_names[i]);
        for (std::size_t j = 0; j < 4; ++j) {
            out += fmt::format(" {:>17.4f}", s.correlation(i, j));
        }
        out += '\n';
    }
    std::string flagged;
    for (std::size_t k = 0; k < 4; ++k) {
        if (s.correlation.degenerate[k]) {
            flagged += fmt::format("{}{}", flagged.empty() ? "" : ", ", text_metric_names[k]);
        }
    }
    out += fmt::format("  zero-variance columns: {}\n", flagged.empty() ? "none" : flagged);
    return out;
}

inline nlohmann::ordered_json stats_to_json(const DatasetStats &s) {
    nlohmann::ordered_json dist = nlohmann::ordered_json::array();
    for (const auto &e : s.distribution.entries) {
        dist.push_back({{"name", e.name}, {"count", e.count}, {"percentage", e.percentage}});
    }
    nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
    for (std::size_t k = 0; k < 4; ++k) {
        metrics[std::string(text_metric_names[k])] = {
            {"mean", s.metrics[k].mean}, {"min", s.metrics[k].min}, {"max", s.metrics[k].max}};
    }
    nlohmann::ordered_json matrix = nlohmann::ordered_json::array();
    nlohmann::ordered_json degenerate = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < 4; ++i) {
        nlohmann::ordered_json row = nlohmann::ordered_json::array();
        for (std::size_t j = 0; j < 4; ++j) {
            row.push_back(s.correlation(i, j));
        }
        matrix.push_back(std::move(row));
        degenerate[std::string(text_metric_names[i])] = s.correlation.degenerate[i];
    }
    return {{"total", s.distribution.total},
            {"distribution", dist},
            {"metrics", metrics},
            {"correlation", {{"columns", text_metric_names}, {"matrix", matrix}, {"degenerate", degenerate}}}};
}

}  // namespace moodpipe
