// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include "moodpipe/moodpipe.hpp"
#include "support/reference_data.hpp"
#include "support/split_oracle.hpp"
#include "support/synthetic_corpus.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

using namespace moodpipe;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double distribution_budget_s = 1.0;
constexpr double synthetic_oracle_min = 0.95;
constexpr double synthetic_accuracy_min = 0.90;
constexpr double synthetic_budget_s = 120.0;
constexpr std::size_t synthetic_size = 2000;
constexpr std::size_t oracle_datasets = 200;
constexpr double oracle_gain_tol = 1e-12;
constexpr double oracle_budget_s = 5.0;
constexpr std::size_t gain_identity_splits = 100;
constexpr double gain_identity_tol = 1e-10;
constexpr std::size_t gradient_seeds = 10;
constexpr double gradient_tol = 1e-4;
constexpr std::size_t attention_instances = 1000;
constexpr double attention_tol = 1e-12;
constexpr std::size_t stub_improving_rounds = 5;
constexpr std::size_t stub_expected_halt = 15;

struct Outcome {
    bool pass{false};
    std::string detail;
};

struct Criterion {
    std::string name;
    std::function<Outcome()> run;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path work_root() {
    static const fs::path root = [] {
        auto p = fs::temp_directory_path() / "moodpipe_acceptance";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return root;
}

void write_text(const fs::path &path, const std::string &content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

Outcome distribution_percentages() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto path = work_root() / "distribution.jsonl";
    write_text(path, testdata::to_jsonl(testdata::distribution_table().records));
    const auto text = render_stats(compute_stats(load_dataset(path)));
    const double elapsed = seconds_since(t0);
    std::string printed;
    bool ok = true;
    for (const auto &d : testdata::distribution_999) {
        const auto start = text.find("  " + std::string(d.name) + " ");
        const auto line = start == std::string::npos ? std::string() : text.substr(start, text.find('\n', start) - start);
        const bool hit = line.find(" " + std::string(d.percent) + "%") != std::string::npos;
        ok = ok && hit;
        printed += fmt::format("{}{}", printed.empty() ? "" : "/", hit ? d.percent : "?");
    }
    return {ok && elapsed < distribution_budget_s, fmt::format("{} in {:.3f}s", printed, elapsed)};
}

Outcome report_aggregation() {
    const auto rows = testdata::published_rows();
    const auto [macro, weighted] = average_metrics(rows);
    const auto m = format_two_decimals(macro.f1);
    const auto w = format_two_decimals(weighted.f1);
    return {m == "0.94" && w == "0.94" && weighted.support == 8596,
            fmt::format("macro f1 {}, weighted f1 {}, support {}", m, w, weighted.support)};
}

PipelineConfig desk_config(const fs::path &dataset, const fs::path &out) {
    auto cfg = parse_config(nlohmann::json{{"dataset_path", dataset.string()}, {"output_dir", out.string()}});
    return cfg;
}

const fs::path &synthetic_dataset() {
    static const fs::path path = [] {
        const auto p = work_root() / "synthetic.jsonl";
        write_text(p, testdata::to_jsonl(testdata::make_synthetic_corpus(synthetic_size, 7).records));
        return p;
    }();
    return path;
}

Outcome synthetic_end_to_end() {
    const auto table = load_dataset(synthetic_dataset());
    const auto [labels, encoded] = encode_labels(table);
    const auto [train, test] = stratified_split(encoded, 0.2, 3);
    const double oracle = testdata::nearest_centroid_accuracy(train, test, labels.size());
    if (oracle < synthetic_oracle_min) {
        return {false, fmt::format("bag-of-words oracle {:.4f} < {}", oracle, synthetic_oracle_min)};
    }
    const auto t0 = std::chrono::steady_clock::now();
    const auto summary = train_pipeline(desk_config(synthetic_dataset(), work_root() / "run_a"));
    const double elapsed = seconds_since(t0);
    return {summary.report.accuracy >= synthetic_accuracy_min && elapsed < synthetic_budget_s,
            fmt::format("oracle {:.4f}, test accuracy {:.4f} on {} records, {} rounds (best {}), {:.1f}s", oracle,
                        summary.report.accuracy, summary.test_size, summary.completed_rounds, summary.best_iteration,
                        elapsed)};
}

Outcome split_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    detail::engine gen(20240);
    const std::array<double, 4> lambdas{0.0, 0.5, 1.0, 2.0};
    std::size_t agree = 0;
    std::size_t with_split = 0;
    for (std::size_t trial = 0; trial < oracle_datasets; ++trial) {
        const double lambda = lambdas[detail::uniform_below(gen, 4)];
        const double gamma = detail::uniform01(gen) < 0.3 ? 0.25 : 0.0;
        const double min_h = std::array<double, 3>{0.0, 1e-3, 0.5}[detail::uniform_below(gen, 3)];
        const auto data = testdata::random_instances(gen, lambda == 0.0);
        const auto got = best_split(testdata::to_matrix(data), testdata::to_gh(data), SplitParams{lambda, gamma, min_h});
        const auto want = testdata::enumerate_splits(data, lambda, gamma, min_h);
        bool same = got.has_value() == want.has_value();
        if (same && got) {
            ++with_split;
            same = got->feature == want->feature && got->threshold == want->threshold &&
                   std::abs(got->gain - want->gain) <= oracle_gain_tol;
        }
        agree += same ? 1 : 0;
    }
    const double elapsed = seconds_since(t0);
    return {agree == oracle_datasets && elapsed < oracle_budget_s,
            fmt::format("{}/{} agree ({} with a split), {:.3f}s", agree, oracle_datasets, with_split, elapsed)};
}

Outcome gain_identity() {
    detail::engine gen(5050);
    detail::normal_sampler normal(0.0, 1.0);
    std::size_t checked = 0;
    double worst = 0.0;
    while (checked < gain_identity_splits) {
        const std::size_t n = 2 + detail::uniform_below(gen, 30);
        const std::size_t nf = 1 + detail::uniform_below(gen, 4);
        Matrix x(n, nf);
        std::vector<GradPair> gh(n);
        for (double &v : x.data()) {
            v = normal(gen);
        }
        for (auto &p : gh) {
            p = {normal(gen), detail::uniform01(gen)};
        }
        const double lambda = 2.0 * detail::uniform01(gen);
        const double gamma = 0.1 * detail::uniform01(gen);
        const auto s = best_split(x, gh, SplitParams{lambda, gamma, 1e-3});
        if (!s) {
            continue;
        }
        ++checked;
        double gl = 0, hl = 0, gr = 0, hr = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const bool left = x(i, s->feature) < s->threshold;
            (left ? gl : gr) += gh[i].grad;
            (left ? hl : hr) += gh[i].hess;
        }
        auto leaf_objective = [&](double g, double h) { return -0.5 * g * g / (h + lambda) + gamma; };
        const double before = leaf_objective(gl + gr, hl + hr);
        const double after = leaf_objective(gl, hl) + leaf_objective(gr, hr);
        worst = std::max(worst, std::abs(s->gain - (before - after)));
    }
    return {worst <= gain_identity_tol, fmt::format("{} splits, max |gain - decrease| = {:.3e}", checked, worst)};
}

Outcome gradient_checks() {
    const std::array<grad_block, 6> blocks{grad_block::softmax,       grad_block::attention_query,
                                           grad_block::attention_key, grad_block::attention_value,
                                           grad_block::layer_norm,    grad_block::feedforward};
    bool ok = true;
    std::string detail;
    for (const auto b : blocks) {
        double worst = 0.0;
        for (std::uint64_t seed = 1; seed <= gradient_seeds; ++seed) {
            worst = std::max(worst, gradient_check(b, seed));
        }
        ok = ok && worst < gradient_tol;
        detail += fmt::format("{}{} {:.1e}", detail.empty() ? "" : ", ", to_string(b), worst);
    }
    return {ok, detail};
}

Outcome attention_invariants() {
    detail::engine gen(1000);
    double worst_sum = 0.0;
    double worst_hull = 0.0;
    for (std::size_t trial = 0; trial < attention_instances; ++trial) {
        const std::size_t n = 1 + detail::uniform_below(gen, 8);
        const std::size_t dk = 1 + detail::uniform_below(gen, 6);
        const std::size_t dv = 1 + detail::uniform_below(gen, 6);
        const double spread = 0.1 + 4.0 * detail::uniform01(gen);
        const Matrix q = detail::random_matrix(gen, n, dk, spread);
        const Matrix k = detail::random_matrix(gen, n, dk, spread);
        const Matrix v = detail::random_matrix(gen, n, dv, spread);
        std::vector<int> mask(n);
        for (int &m : mask) {
            m = detail::uniform01(gen) < 0.7 ? 1 : 0;
        }
        mask[detail::uniform_below(gen, n)] = 1;
        const Matrix p = attention_weights(q, k, mask);
        const Matrix out = attention(q, k, v, mask);
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                s += mask[j] ? p(i, j) : 0.0;
            }
            worst_sum = std::max(worst_sum, std::abs(s - 1.0));
            for (std::size_t c = 0; c < dv; ++c) {
                double lo = INFINITY, hi = -INFINITY;
                for (std::size_t j = 0; j < n; ++j) {
                    if (mask[j]) {
                        lo = std::min(lo, v(j, c));
                        hi = std::max(hi, v(j, c));
                    }
                }
                worst_hull = std::max({worst_hull, lo - out(i, c), out(i, c) - hi});
            }
        }
    }
    return {worst_sum <= attention_tol && worst_hull <= attention_tol,
            fmt::format("{} instances, max |row sum - 1| = {:.1e}, max hull excess = {:.1e}", attention_instances,
                        worst_sum, std::max(0.0, worst_hull))};
}

Outcome early_stopping() {
    detail::engine gen(15);
    detail::normal_sampler normal(0.0, 1.0);
    Matrix x(60, 3);
    std::vector<int> y(60);
    for (std::size_t i = 0; i < 60; ++i) {
        y[i] = static_cast<int>(i % 3);
        for (std::size_t f = 0; f < 3; ++f) {
            x(i, f) = normal(gen) + (f == i % 3 ? 2.0 : 0.0);
        }
    }
    BoostConfig cfg;
    TrainOptions opts;
    std::size_t last_round = 0;
    opts.validation_loss = [](std::size_t round, const Matrix &) {
        return 10.0 - static_cast<double>(std::min(round, stub_improving_rounds));
    };
    opts.on_round = [&](std::size_t round, double) { last_round = round; };
    auto e = train_ensemble(x, y, x, y, cfg, 3, opts);
    const std::size_t halted = e.completed_rounds();
    const std::size_t best = e.best_iteration;
    e.truncate(best);
    return {halted == stub_expected_halt && last_round == stub_expected_halt && best == stub_improving_rounds &&
                e.completed_rounds() == best,
            fmt::format("halted at round {}, best_iteration {}", halted, best)};
}

template <typename Error, typename Fn>
bool throws_exactly(Fn &&fn) {
    try {
        fn();
    } catch (const Error &) {
        return true;
    } catch (...) {
        return false;
    }
    return false;
}

Outcome persistence() {
    EncoderConfig ec;
    ec.num_layers = 2;
    ec.d_model = 16;
    ec.num_heads = 4;
    ec.d_ff = 32;
    ec.max_len = 12;
    ec.vocab_size = 40;
    const auto weights = init_weights(ec, 99);
    const auto enc_bytes = save_encoder(weights);
    const bool enc_round = load_encoder(enc_bytes) == weights && save_encoder(load_encoder(enc_bytes)) == enc_bytes;

    detail::engine gen(3);
    detail::normal_sampler normal(0.0, 1.0);
    Matrix x(40, 4);
    std::vector<int> y(40);
    for (std::size_t i = 0; i < 40; ++i) {
        y[i] = static_cast<int>(i % 3);
        for (std::size_t f = 0; f < 4; ++f) {
            x(i, f) = normal(gen) + (f == i % 3 ? 1.5 : 0.0);
        }
    }
    BoostConfig cfg;
    cfg.num_rounds = 8;
    TrainOptions opts;
    opts.label_names = {"a", "b", "c"};
    const auto ensemble = train_ensemble(x, y, x, y, cfg, 3, opts);
    const auto gbt_bytes = save_model(ensemble);
    const bool gbt_round = load_model(gbt_bytes) == ensemble && save_model(load_model(gbt_bytes)) == gbt_bytes;

    auto corrupt_magic = [](std::string b) {
        b[0] = 'X';
        return b;
    };
    const bool enc_magic =
        throws_exactly<bad_magic_error>([&] { load_encoder(corrupt_magic(enc_bytes)); });
    const bool gbt_magic = throws_exactly<bad_magic_error>([&] { load_model(corrupt_magic(gbt_bytes)); });
    bool enc_trunc = true;
    bool gbt_trunc = true;
    for (const double frac : {0.0, 0.001, 0.3, 0.5, 0.999}) {
        const auto ce = static_cast<std::size_t>(frac * static_cast<double>(enc_bytes.size()));
        const auto cg = static_cast<std::size_t>(frac * static_cast<double>(gbt_bytes.size()));
        enc_trunc = enc_trunc && throws_exactly<truncated_payload_error>(
                                     [&] { load_encoder(enc_bytes.substr(0, ce)); });
        gbt_trunc = gbt_trunc && throws_exactly<truncated_payload_error>(
                                     [&] { load_model(gbt_bytes.substr(0, cg)); });
    }
    enc_trunc = enc_trunc && throws_exactly<truncated_payload_error>(
                                 [&] { load_encoder(enc_bytes.substr(0, enc_bytes.size() - 1)); });
    gbt_trunc = gbt_trunc && throws_exactly<truncated_payload_error>(
                                 [&] { load_model(gbt_bytes.substr(0, gbt_bytes.size() - 1)); });
    const bool ok = enc_round && gbt_round && enc_magic && gbt_magic && enc_trunc && gbt_trunc;
    return {ok, fmt::format("round trip MPE1 {} MPG1 {}; bad magic {} {}; truncation {} {}", enc_round, gbt_round,
                            enc_magic, gbt_magic, enc_trunc, gbt_trunc)};
}

Outcome determinism() {
    const auto a = work_root() / "run_a";
    if (!fs::exists(a / artifact::model_bin)) {
        train_pipeline(desk_config(synthetic_dataset(), a));
    }
    const auto b = work_root() / "run_b";
    train_pipeline(desk_config(synthetic_dataset(), b), RunOptions{4, {}});
    const std::array<std::string_view, 7> names{artifact::report_txt,  artifact::report_json, artifact::confusion_csv,
                                                artifact::vocab_txt,   artifact::encoder_bin, artifact::model_bin,
                                                artifact::config_snapshot_json};
    std::string differing;
    for (const auto n : names) {
        if (read_file(a / n) != read_file(b / n)) {
            differing += fmt::format(" {}", n);
        }
    }
    return {differing.empty(), differing.empty() ? "all 7 artifacts identical (threads 1 vs 4)"
                                                 : "differing:" + differing};
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {"class distribution percentages on the 999-record table", distribution_percentages},
        {"macro and weighted f1 aggregation of the reference report", report_aggregation},
        {"synthetic 7-class end-to-end accuracy", synthetic_end_to_end},
        {"split search matches exhaustive enumeration", split_oracle},
        {"split gain equals objective decrease", gain_identity},
        {"gradient checks for every block", gradient_checks},
        {"attention row-stochastic and convex hull", attention_invariants},
        {"early stopping halts at round 15", early_stopping},
        {"persistence round trip and distinct errors", persistence},
        {"deterministic artifacts across runs and threads", determinism},
    };
    int failures = 0;
    for (const auto &c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception &e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += o.pass ? 0 : 1;
        fmt::print("{}  {}  [{:.2f}s]  {}\n", o.pass ? "PASS" : "FAIL", c.name, seconds_since(t0), o.detail);
        std::fflush(stdout);
    }
    fs::remove_all(work_root());
    fmt::print("{} of {} criteria passed\n", criteria.size() - static_cast<std::size_t>(failures), criteria.size());
    return failures == 0 ? 0 : 1;
}
