// moodpipe: train / predict / stats front end.
//
// Exit codes: 0 success, 1 internal failure, 2 usage or input error.

#include "moodpipe/moodpipe.hpp"

#include "CLI11.hpp"

#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace {

constexpr int exit_internal = 1;
constexpr int exit_usage = 2;

int run_train(const std::string &config_path, const std::string &output_override, std::size_t threads, bool quiet) {
    moodpipe::PipelineConfig config;
    try {
        config = moodpipe::load_config(config_path);
    } catch (const moodpipe::input_error &e) {
        std::cerr << "config: " << e.what() << '\n';
        return exit_usage;
    }
    if (!output_override.empty()) {
        config.output_dir = output_override;
    }
    moodpipe::RunOptions options;
    options.threads = threads;
    if (!quiet) {
        options.log = [](std::string_view msg) { std::cerr << msg << '\n'; };
    }
    try {
        const auto summary = moodpipe::train_pipeline(config, options);
        std::cout << moodpipe::render_report(summary.report);
        std::cout << fmt::format("\nartifacts written to {}\n", config.output_dir.string());
    } catch (const moodpipe::stage_error &e) {
        std::cerr << e.what() << '\n';
        return e.input_related() ? exit_usage : exit_internal;
    }
    return 0;
}

std::vector<std::string> read_statements(const std::filesystem::path &path) {
    const auto ext = path.extension().string();
    if (ext == ".jsonl" || ext == ".csv") {
        const auto table = moodpipe::load_dataset(path);
        std::vector<std::string> out;
        for (const auto &r : table.records) {
            out.push_back(r.text);
        }
        return out;
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw moodpipe::input_error("cannot open input '" + path.string() + "'");
    }
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (!moodpipe::unicode::trim(line).empty()) {
            out.push_back(line);
        }
    }
    return out;
}

int run_predict(const std::string &model_dir, const std::string *text, const std::string *input) {
    std::vector<std::string> statements;
    try {
        if (text != nullptr) {
            if (moodpipe::unicode::trim(*text).empty()) {
                std::cerr << "predict: --text is empty\n";
                return exit_usage;
            }
            statements.push_back(*text);
        } else {
            statements = read_statements(*input);
        }
    } catch (const moodpipe::error &e) {
        std::cerr << "predict: " << e.what() << '\n';
        return exit_usage;
    }
    moodpipe::TrainedModel model;
    try {
        model = moodpipe::load_trained_model(model_dir);
    } catch (const moodpipe::error &e) {
        std::cerr << "predict: cannot load model: " << e.what() << '\n';
        return dynamic_cast<const moodpipe::input_error *>(&e) != nullptr ? exit_usage : exit_internal;
    }
    try {
        for (const auto &s : statements) {
            std::cout << moodpipe::format_prediction(moodpipe::predict_text(model, s)) << '\n';
        }
    } catch (const moodpipe::error &e) {
        std::cerr << "predict: " << e.what() << '\n';
        return exit_internal;
    }
    return 0;
}

int run_stats(const std::string &data, const std::string &format) {
    try {
        const auto table = moodpipe::load_dataset(data);
        const auto stats = moodpipe::compute_stats(table);
        if (format == "json") {
            std::cout << moodpipe::stats_to_json(stats).dump(2) << '\n';
        } else {
            std::cout << moodpipe::render_stats(stats);
        }
    } catch (const moodpipe::input_error &e) {
        std::cerr << "stats: " << e.what() << '\n';
        return exit_usage;
    } catch (const std::exception &e) {
        std::cerr << "stats: " << e.what() << '\n';
        return exit_internal;
    }
    return 0;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"moodpipe: subword tokenizer + transformer features + boosted trees for statement classification"};
    app.require_subcommand(1);

    std::string config_path;
    std::string output_dir;
    std::size_t threads = 1;
    bool quiet = false;
    auto *train = app.add_subcommand("train", "train a model from a JSON config");
    train->add_option("--config", config_path, "pipeline config file")->required();
    train->add_option("--output", output_dir, "override the config's output_dir");
    train->add_option("--threads", threads, "worker threads for embedding and tree building")
        ->check(CLI::Range(std::size_t{1}, std::size_t{256}));
    train->add_flag("--quiet", quiet, "suppress progress messages");

    std::string model_dir;
    std::string text;
    std::string input;
    auto *predict = app.add_subcommand("predict", "classify statements with a trained model");
    predict->add_option("--model", model_dir, "trained model directory")->required();
    auto *text_opt = predict->add_option("--text", text, "a single statement");
    auto *input_opt = predict->add_option("--input", input, "file with one statement per line (.jsonl/.csv: dataset)");
    text_opt->excludes(input_opt);

    std::string data;
    std::string format = "text";
    auto *stats = app.add_subcommand("stats", "dataset class distribution, text metrics and correlations");
    stats->add_option("--data", data, "dataset file")->required();
    stats->add_option("--format", format, "text or json")->check(CLI::IsMember({"text", "json"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_usage;
    }

    if (train->parsed()) {
        return run_train(config_path, output_dir, threads, quiet);
    }
    if (predict->parsed()) {
        if (text_opt->count() == 0 && input_opt->count() == 0) {
            std::cerr << "predict: one of --text or --input is required\n";
            return exit_usage;
        }
        return run_predict(model_dir, text_opt->count() ? &text : nullptr, input_opt->count() ? &input : nullptr);
    }
    return run_stats(data, format);
}
