#pragma once

// Text normalization, frequency-ranked subword vocabulary, and greedy
// longest-match segmentation with [CLS]/[SEP]/[PAD] framing.

#include "moodpipe/error.hpp"
#include "moodpipe/unicode.hpp"

#include <algorithm>
#include <array>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace moodpipe {

inline constexpr std::string_view continuation_marker = "##";

enum special_token : int { pad_id = 0, unk_id = 1, cls_id = 2, sep_id = 3, mask_id = 4 };

inline constexpr std::array<std::string_view, 5> special_pieces{"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};

class SubwordVocabulary {
  public:
    /// Specials only.
    SubwordVocabulary() : SubwordVocabulary(std::vector<std::string>(special_pieces.begin(), special_pieces.end())) {}

    /// Takes the full piece list, specials included at ids 0-4.
    explicit SubwordVocabulary(std::vector<std::string> pieces) : pieces_{std::move(pieces)} {
        if (pieces_.size() < special_pieces.size()) {
            throw input_error("vocabulary is missing the special pieces");
        }
        for (std::size_t i = 0; i < special_pieces.size(); ++i) {
            if (pieces_[i] != special_pieces[i]) {
                throw input_error("vocabulary id " + std::to_string(i) + " must be " + std::string(special_pieces[i]));
            }
        }
        index_.reserve(pieces_.size());
        for (std::size_t i = 0; i < pieces_.size(); ++i) {
            if (pieces_[i].empty() || pieces_[i] == continuation_marker) {
                throw input_error("vocabulary piece " + std::to_string(i) + " is empty");
            }
            if (!index_.emplace(pieces_[i], static_cast<int>(i)).second) {
                throw input_error("duplicate vocabulary piece '" + pieces_[i] + "'");
            }
        }
    }

    [[nodiscard]] std::size_t size() const noexcept { return pieces_.size(); }
    [[nodiscard]] const std::vector<std::string> &pieces() const noexcept { return pieces_; }
    [[nodiscard]] const std::string &piece(int id) const { return pieces_.at(static_cast<std::size_t>(id)); }

    [[nodiscard]] int find(std::string_view piece) const {
        const auto it = index_.find(std::string(piece));
        return it == index_.end() ? -1 : it->second;
    }
    [[nodiscard]] bool contains(std::string_view piece) const { return find(piece) >= 0; }

    /// One piece per line; line number is the id.
    void save(std::ostream &out) const {
        for (const auto &p : pieces_) {
            out << p << '\n';
        }
    }

    static SubwordVocabulary load(std::istream &in) {
        std::vector<std::string> pieces;
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') {
                line.pop_back();
            }
            pieces.push_back(line);
        }
        return SubwordVocabulary(std::move(pieces));
    }

    void save(const std::filesystem::path &path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) {
            throw error("cannot write vocabulary '" + path.string() + "'");
        }
        save(out);
    }

    static SubwordVocabulary load(const std::filesystem::path &path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw input_error("cannot open vocabulary '" + path.string() + "'");
        }
        return load(in);
    }

    friend bool operator==(const SubwordVocabulary &a, const SubwordVocabulary &b) { return a.pieces_ == b.pieces_; }

  private:
    std::vector<std::string> pieces_;
    std::unordered_map<std::string, int> index_;
};

struct TokenSequence {
    std::vector<int> ids;
    std::vector<std::string> pieces;
    std::vector<int> attention_mask;

    [[nodiscard]] std::size_t size() const noexcept { return ids.size(); }
    /// Count of non-pad positions.
    [[nodiscard]] std::size_t active() const {
        return static_cast<std::size_t>(std::count(attention_mask.begin(), attention_mask.end(), 1));
    }
};

/// Lowercase, isolate punctuation, drop control characters, collapse whitespace.
inline std::string normalize(std::string_view text) {
    const std::string lowered = unicode::to_lower(text);
    std::string out;
    out.reserve(lowered.size());
    bool pending_space = false;
    auto emit = [&](char32_t c) {
        if (pending_space && !out.empty()) {
            out.push_back(' ');
        }
        pending_space = false;
        unicode::append_utf8(out, c);
    };
    for (const char32_t c : unicode::decode(lowered)) {
        if (unicode::is_whitespace(c)) {
            pending_space = true;
        } else if (unicode::is_control(c)) {
            continue;
        } else if (unicode::is_punctuation(c)) {
            pending_space = true;
            emit(c);
            pending_space = true;
        } else {
            emit(c);
        }
    }
    return out;
}

/// Specials, then every observed character (word-initial form and "##"
/// continuation form as they occur), then whole words with count >= min_freq
/// ranked by frequency, ties lexicographic, until max_size.
inline SubwordVocabulary build_vocab(std::span<const std::string> corpus, std::size_t max_size, std::size_t min_freq) {
    std::map<std::string, std::size_t> word_counts;
    std::set<std::string> char_pieces;
    for (const auto &text : corpus) {
        for (const auto &word : unicode::split_whitespace(text)) {
            ++word_counts[word];
        }
    }
    for (const auto &[word, count] : word_counts) {
        const auto cps = unicode::decode(word);
        for (std::size_t i = 0; i < cps.size(); ++i) {
            std::string piece = i == 0 ? std::string() : std::string(continuation_marker);
            unicode::append_utf8(piece, cps[i]);
            char_pieces.insert(std::move(piece));
        }
    }
    if (max_size < special_pieces.size() + char_pieces.size()) {
        throw input_error("vocabulary size " + std::to_string(max_size) + " cannot hold " +
                          std::to_string(special_pieces.size()) + " specials and " + std::to_string(char_pieces.size()) +
                          " character pieces");
    }
    std::vector<std::string> pieces(special_pieces.begin(), special_pieces.end());
    pieces.insert(pieces.end(), char_pieces.begin(), char_pieces.end());

    std::vector<std::pair<std::string, std::size_t>> ranked;
    for (const auto &[word, count] : word_counts) {
        if (count >= min_freq && !char_pieces.contains(word)) {
            ranked.emplace_back(word, count);
        }
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto &a, const auto &b) { return a.second > b.second; });
    for (const auto &[word, count] : ranked) {
        if (pieces.size() >= max_size) {
            break;
        }
        pieces.push_back(word);
    }
    return SubwordVocabulary(std::move(pieces));
}

/// Greedy longest-match segmentation of one normalized word. Returns
/// {[UNK]} when some suffix cannot be covered.
inline std::vector<int> segment_word(std::string_view word, const SubwordVocabulary &vocab) {
    const auto cps = unicode::decode(word);
    std::vector<std::size_t> offsets;  // byte offset of each code point, plus end
    offsets.reserve(cps.size() + 1);
    {
        std::size_t byte = 0;
        std::string tmp;
        for (const char32_t c : cps) {
            offsets.push_back(byte);
            tmp.clear();
            unicode::append_utf8(tmp, c);
            byte += tmp.size();
        }
        offsets.push_back(byte);
    }
    const std::string canonical = unicode::encode(cps);

    std::vector<int> out;
    std::size_t start = 0;
    std::string candidate;
    while (start < cps.size()) {
        int match = -1;
        std::size_t end = cps.size();
        for (; end > start; --end) {
            candidate.clear();
            if (start > 0) {
                candidate.append(continuation_marker);
            }
            candidate.append(canonical, offsets[start], offsets[end] - offsets[start]);
            match = vocab.find(candidate);
            if (match >= 0) {
                break;
            }
        }
        if (match < 0) {
            return {unk_id};
        }
        out.push_back(match);
        start = end;
    }
    return out;
}

inline TokenSequence tokenize(std::string_view text, const SubwordVocabulary &vocab, std::size_t max_len) {
    if (max_len < 3) {
        throw input_error("max_len must be at least 3");
    }
    std::vector<int> content;
    for (const auto &word : unicode::split_whitespace(normalize(text))) {
        const auto ids = segment_word(word, vocab);
        content.insert(content.end(), ids.begin(), ids.end());
    }
    if (content.size() > max_len - 2) {
        content.resize(max_len - 2);
    }
    TokenSequence seq;
    seq.ids.reserve(max_len);
    seq.ids.push_back(cls_id);
    seq.ids.insert(seq.ids.end(), content.begin(), content.end());
    seq.ids.push_back(sep_id);
    seq.attention_mask.assign(seq.ids.size(), 1);
    seq.ids.resize(max_len, pad_id);
    seq.attention_mask.resize(max_len, 0);
    seq.pieces.reserve(max_len);
    for (const int id : seq.ids) {
        seq.pieces.push_back(vocab.piece(id));
    }
    return seq;
}

}  // namespace moodpipe
