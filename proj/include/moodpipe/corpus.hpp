#pragma once

// Labeled statement datasets: parsing, label encoding, stratified splits.

#include "moodpipe/detail/rng.hpp"
#include "moodpipe/error.hpp"
#include "moodpipe/unicode.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace moodpipe {

struct StatementRecord {
    std::string text;
    std::string label;

    friend bool operator==(const StatementRecord &, const StatementRecord &) = default;
};

/// Condition names in code-point order; ids are positions in `names`.
class LabelVocabulary {
  public:
    LabelVocabulary() = default;

    explicit LabelVocabulary(std::vector<std::string> names) : names_{std::move(names)} {
        std::sort(names_.begin(), names_.end());
        names_.erase(std::unique(names_.begin(), names_.end()), names_.end());
        for (std::size_t i = 0; i < names_.size(); ++i) {
            index_.emplace(names_[i], static_cast<int>(i));
        }
    }

    [[nodiscard]] std::size_t size() const noexcept { return names_.size(); }
    [[nodiscard]] const std::vector<std::string> &names() const noexcept { return names_; }
    [[nodiscard]] const std::string &name(int id) const { return names_.at(static_cast<std::size_t>(id)); }

    [[nodiscard]] std::optional<int> find(const std::string &name) const {
        const auto it = index_.find(name);
        if (it == index_.end()) {
            return std::nullopt;
        }
        return it->second;
    }

    [[nodiscard]] int index_of(const std::string &name) const {
        if (const auto id = find(name)) {
            return *id;
        }
        throw input_error("unknown label '" + name + "'");
    }

    friend bool operator==(const LabelVocabulary &a, const LabelVocabulary &b) { return a.names_ == b.names_; }

  private:
    std::vector<std::string> names_;
    std::map<std::string, int> index_;
};

/// Records in file order. `labels_encoded` is empty until encode_labels runs.
struct DatasetTable {
    std::vector<StatementRecord> records;
    std::vector<int> labels_encoded;

    [[nodiscard]] std::size_t size() const noexcept { return records.size(); }
    [[nodiscard]] bool empty() const noexcept { return records.empty(); }
    [[nodiscard]] bool encoded() const noexcept { return labels_encoded.size() == records.size() && !records.empty(); }
};

namespace detail {

inline StatementRecord make_record(std::size_t line, std::string text, std::string label) {
    if (unicode::trim(text).empty()) {
        throw parse_error(line, "empty statement");
    }
    if (unicode::trim(label).empty()) {
        throw parse_error(line, "empty status");
    }
    return StatementRecord{std::move(text), std::move(label)};
}

inline std::string string_field(const nlohmann::json &obj, const char *field, std::size_t line) {
    const auto it = obj.find(field);
    if (it == obj.end()) {
        throw parse_error(line, std::string("missing field '") + field + "'");
    }
    if (!it->is_string()) {
        throw parse_error(line, std::string("field '") + field + "' must be a string");
    }
    return it->get<std::string>();
}

inline bool blank(std::string_view line) { return unicode::trim(line).empty(); }

}  // namespace detail

/// Reads line-delimited JSON objects with "statement" and "status" fields.
/// Blank lines are skipped; errors carry the 1-based line number.
inline DatasetTable parse_dataset(std::istream &source) {
    DatasetTable table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(source, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (detail::blank(line)) {
            continue;
        }
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error &e) {
            throw parse_error(line_no, std::string("malformed JSON: ") + e.what());
        }
        if (!obj.is_object()) {
            throw parse_error(line_no, "expected a JSON object");
        }
        auto text = detail::string_field(obj, "statement", line_no);
        auto label = detail::string_field(obj, "status", line_no);
        table.records.push_back(detail::make_record(line_no, std::move(text), std::move(label)));
    }
    return table;
}

inline DatasetTable parse_dataset(std::string_view text) {
    std::istringstream in{std::string(text)};
    return parse_dataset(in);
}

namespace detail {

/// One RFC-4180 record; returns nullopt at end of input. `line` is advanced
/// past every physical line consumed.
inline std::optional<std::vector<std::string>> read_csv_record(std::istream &in, std::size_t &line) {
    std::vector<std::string> fields;
    std::string field;
    bool in_quotes = false;
    bool field_was_quoted = false;
    bool any = false;
    const std::size_t start_line = line + 1;
    int ch = 0;
    while ((ch = in.get()) != std::char_traits<char>::eof()) {
        any = true;
        const char c = static_cast<char>(ch);
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get();
                    field.push_back('"');
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') {
                    ++line;
                }
                field.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            if (!field.empty() || field_was_quoted) {
                throw parse_error(start_line, "stray quote inside unquoted CSV field");
            }
            in_quotes = true;
            field_was_quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
            field_was_quoted = false;
        } else if (c == '\n') {
            ++line;
            if (!field.empty() && field.back() == '\r' && !field_was_quoted) {
                field.pop_back();
            }
            fields.push_back(std::move(field));
            return fields;
        } else if (c == '\r' && field_was_quoted) {
            // CR of a CRLF after a closing quote
        } else {
            if (field_was_quoted) {
                throw parse_error(start_line, "unexpected character after closing quote");
            }
            field.push_back(c);
        }
    }
    if (in_quotes) {
        throw parse_error(start_line, "unterminated quoted CSV field");
    }
    if (!any) {
        return std::nullopt;
    }
    ++line;
    if (!field.empty() && field.back() == '\r' && !field_was_quoted) {
        field.pop_back();
    }
    fields.push_back(std::move(field));
    return fields;
}

}  // namespace detail

/// CSV alternative: a header naming "statement" and "status" columns
/// (other columns are ignored), RFC-4180 quoting.
inline DatasetTable parse_csv_dataset(std::istream &source) {
    DatasetTable table;
    std::size_t line = 0;
    auto header = detail::read_csv_record(source, line);
    if (!header) {
        return table;
    }
    if (!header->empty() && header->front().starts_with("\xEF\xBB\xBF")) {
        header->front().erase(0, 3);
    }
    std::optional<std::size_t> statement_col;
    std::optional<std::size_t> status_col;
    for (std::size_t i = 0; i < header->size(); ++i) {
        const auto name = unicode::trim((*header)[i]);
        if (name == "statement") {
            statement_col = i;
        } else if (name == "status") {
            status_col = i;
        }
    }
    if (!statement_col) {
        throw parse_error(1, "missing field 'statement' in CSV header");
    }
    if (!status_col) {
        throw parse_error(1, "missing field 'status' in CSV header");
    }
    for (;;) {
        const std::size_t record_line = line + 1;
        auto fields = detail::read_csv_record(source, line);
        if (!fields) {
            break;
        }
        if (fields->size() == 1 && detail::blank(fields->front())) {
            continue;
        }
        if (*statement_col >= fields->size()) {
            throw parse_error(record_line, "missing field 'statement'");
        }
        if (*status_col >= fields->size()) {
            throw parse_error(record_line, "missing field 'status'");
        }
        table.records.push_back(
            detail::make_record(record_line, std::move((*fields)[*statement_col]), std::move((*fields)[*status_col])));
    }
    return table;
}

/// Opens a dataset file; ".csv" selects the CSV reader, anything else JSON lines.
inline DatasetTable load_dataset(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw input_error("cannot open dataset '" + path.string() + "'");
    }
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    try {
        return ext == ".csv" ? parse_csv_dataset(in) : parse_dataset(in);
    } catch (const parse_error &e) {
        throw input_error(path.string() + ": " + e.what());
    }
}

/// Builds the label vocabulary and fills `labels_encoded`.
inline std::pair<LabelVocabulary, DatasetTable> encode_labels(DatasetTable table) {
    if (table.empty()) {
        throw input_error("cannot encode labels of an empty dataset");
    }
    std::vector<std::string> names;
    names.reserve(table.size());
    for (const auto &r : table.records) {
        names.push_back(r.label);
    }
    LabelVocabulary vocab(std::move(names));
    table.labels_encoded.clear();
    table.labels_encoded.reserve(table.size());
    for (const auto &r : table.records) {
        table.labels_encoded.push_back(vocab.index_of(r.label));
    }
    return {std::move(vocab), std::move(table)};
}

/// Per-class count of records assigned to the held-out side.
inline std::size_t held_out_count(double fraction, std::size_t class_count) {
    auto n = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(class_count) + 1e-9));
    n = std::max<std::size_t>(n, 1);
    return std::min(n, class_count - 1);
}

/// Splits an encoded table per class; both halves keep input order.
inline std::pair<DatasetTable, DatasetTable> stratified_split(const DatasetTable &table, double test_fraction,
                                                             std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw input_error("test fraction must lie in (0, 1)");
    }
    if (!table.encoded()) {
        throw input_error("stratified split needs an encoded, non-empty table");
    }
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < table.size(); ++i) {
        by_class[table.labels_encoded[i]].push_back(i);
    }
    std::vector<bool> to_test(table.size(), false);
    detail::engine gen(seed);
    for (auto &[label, members] : by_class) {
        if (members.size() < 2) {
            throw input_error("class '" + table.records[members.front()].label + "' has fewer than 2 records");
        }
        detail::shuffle(members.begin(), members.end(), gen);
        const std::size_t n_test = held_out_count(test_fraction, members.size());
        for (std::size_t k = 0; k < n_test; ++k) {
            to_test[members[k]] = true;
        }
    }
    DatasetTable train;
    DatasetTable test;
    for (std::size_t i = 0; i < table.size(); ++i) {
        auto &side = to_test[i] ? test : train;
        side.records.push_back(table.records[i]);
        side.labels_encoded.push_back(table.labels_encoded[i]);
    }
    return {std::move(train), std::move(test)};
}

}  // namespace moodpipe
