#include "moodpipe/tokenizer.hpp"
#include "support/synthetic_corpus.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace moodpipe;

namespace {

SubwordVocabulary vocab_with(std::initializer_list<std::string> extra) {
    std::vector<std::string> pieces(special_pieces.begin(), special_pieces.end());
    pieces.insert(pieces.end(), extra.begin(), extra.end());
    return SubwordVocabulary(std::move(pieces));
}

std::vector<std::string> real_pieces(const TokenSequence &seq) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (seq.attention_mask[i] == 1) {
            out.push_back(seq.pieces[i]);
        }
    }
    return out;
}

}  // namespace

TEST(Normalize, Examples) {
    EXPECT_EQ(normalize("Hello, WORLD!"), "hello , world !");
    EXPECT_EQ(normalize("  a\t b "), "a b");
    EXPECT_EQ(normalize("don't"), "don ' t");
}

TEST(Normalize, ControlsAndUnicode) {
    EXPECT_EQ(normalize("a\x01" "b\xE2\x80\x8B" "c"), "abc");                 // C0 control and zero-width space
    EXPECT_EQ(normalize("\xC3\x89T\xC3\x89 \xE2\x80\x94ok"), "\xC3\xA9t\xC3\xA9 \xE2\x80\x94 ok");  // "ÉTÉ —ok"
    EXPECT_EQ(normalize("\xC2\xA0x\xE3\x80\x80y"), "x y");                    // NBSP and ideographic space
    EXPECT_EQ(normalize(""), "");
    EXPECT_EQ(normalize("..."), ". . .");
}

TEST(Normalize, Idempotent) {
    detail::engine gen(4);
    const std::vector<std::string> atoms{"A", "b", ",", "!", " ", "\t", "'", "\xC3\x80", "x\x02", "-", "  "};
    for (int trial = 0; trial < 300; ++trial) {
        std::string text;
        for (std::size_t i = 0, n = detail::uniform_below(gen, 15); i < n; ++i) {
            text += atoms[detail::uniform_below(gen, atoms.size())];
        }
        const auto once = normalize(text);
        EXPECT_EQ(normalize(once), once);
        EXPECT_EQ(once.find("  "), std::string::npos);
        EXPECT_FALSE(!once.empty() && (once.front() == ' ' || once.back() == ' '));
    }
}

TEST(BuildVocab, HandTrace) {
    const std::vector<std::string> corpus{"aa aa ab"};
    const auto v = build_vocab(corpus, 20, 1);
    for (std::size_t i = 0; i < special_pieces.size(); ++i) {
        EXPECT_EQ(v.piece(static_cast<int>(i)), special_pieces[i]);
    }
    EXPECT_TRUE(v.contains("a"));
    EXPECT_TRUE(v.contains("##a"));
    EXPECT_TRUE(v.contains("##b"));
    EXPECT_TRUE(v.contains("aa"));
    EXPECT_TRUE(v.contains("ab"));
    EXPECT_LT(v.find("aa"), v.find("ab"));  // frequency 2 ranks before frequency 1
    EXPECT_EQ(v.size(), 10U);
}

TEST(BuildVocab, EmptyCorpus) {
    const auto v = build_vocab({}, 5, 1);
    EXPECT_EQ(v.size(), 5U);
}

TEST(BuildVocab, MinFreqThreshold) {
    const std::vector<std::string> corpus{"cat dog cat bird"};
    const auto v = build_vocab(corpus, 100, 10);
    for (int id = 5; id < static_cast<int>(v.size()); ++id) {
        const auto &p = v.piece(id);
        EXPECT_EQ(unicode::length(p.starts_with("##") ? p.substr(2) : p), 1U) << p;
    }
}

TEST(BuildVocab, TooSmallRejected) {
    const std::vector<std::string> corpus{"abc"};
    EXPECT_THROW(build_vocab(corpus, 7, 1), input_error);  // 5 specials + a, ##b, ##c
    EXPECT_NO_THROW(build_vocab(corpus, 8, 1));
}

TEST(BuildVocab, MaxSizeCapsWordsWithLexicographicTies) {
    const std::vector<std::string> corpus{"zz yy xx zz yy xx qq"};
    const auto v = build_vocab(corpus, 5 + 8 + 2, 1);  // specials, q,x,y,z,##q,##x,##y,##z, two words
    EXPECT_EQ(v.size(), 15U);
    EXPECT_TRUE(v.contains("xx"));
    EXPECT_TRUE(v.contains("yy"));
    EXPECT_FALSE(v.contains("zz"));
    EXPECT_FALSE(v.contains("qq"));
}

TEST(BuildVocab, Deterministic) {
    const auto corpus = testdata::make_synthetic_corpus(300, 2).records;
    std::vector<std::string> texts;
    for (const auto &r : corpus) {
        texts.push_back(normalize(r.text));
    }
    std::ostringstream a;
    std::ostringstream b;
    build_vocab(texts, 400, 2).save(a);
    build_vocab(texts, 400, 2).save(b);
    EXPECT_EQ(a.str(), b.str());
}

TEST(SubwordVocabulary, Validation) {
    EXPECT_THROW(SubwordVocabulary(std::vector<std::string>{"[PAD]", "[UNK]"}), input_error);
    EXPECT_THROW(vocab_with({"a", "a"}), input_error);
    EXPECT_THROW(vocab_with({""}), input_error);
    const auto v = vocab_with({"a", "##b"});
    EXPECT_EQ(v.find("##b"), 6);
    EXPECT_EQ(v.find("zz"), -1);
}

TEST(SubwordVocabulary, FileRoundTrip) {
    const auto v = vocab_with({"play", "##ing", "\xC3\xA9t\xC3\xA9"});
    std::stringstream s;
    v.save(s);
    EXPECT_EQ(s.str().substr(0, 6), "[PAD]\n");
    const auto back = SubwordVocabulary::load(s);
    EXPECT_EQ(back.pieces(), v.pieces());
}

TEST(Tokenize, GreedyLongestMatch) {
    const auto v = vocab_with({"play", "##ing", "p", "##l", "##a", "##y"});
    const auto seq = tokenize("playing", v, 8);
    EXPECT_EQ(real_pieces(seq), (std::vector<std::string>{"[CLS]", "play", "##ing", "[SEP]"}));
}

TEST(Tokenize, UncoverableWordBecomesUnk) {
    const auto v = vocab_with({"a"});
    const auto seq = tokenize("zzz", v, 8);
    EXPECT_EQ(real_pieces(seq), (std::vector<std::string>{"[CLS]", "[UNK]", "[SEP]"}));
    // partially coverable words also collapse to a single [UNK]
    const auto v2 = vocab_with({"ab"});
    EXPECT_EQ(real_pieces(tokenize("abz", v2, 8)), (std::vector<std::string>{"[CLS]", "[UNK]", "[SEP]"}));
}

TEST(Tokenize, PaddingContract) {
    const auto v = vocab_with({"hi", "there"});
    const auto seq = tokenize("hi there", v, 8);
    EXPECT_EQ(seq.size(), 8U);
    EXPECT_EQ(seq.attention_mask, (std::vector<int>{1, 1, 1, 1, 0, 0, 0, 0}));
    EXPECT_EQ(seq.pieces[4], "[PAD]");
    EXPECT_EQ(seq.ids[7], pad_id);
}

TEST(Tokenize, TruncationKeepsHeadAndSpecials) {
    const auto v = vocab_with({"a", "b", "c", "d"});
    const auto seq = tokenize("a b c d", v, 4);
    EXPECT_EQ(seq.pieces, (std::vector<std::string>{"[CLS]", "a", "b", "[SEP]"}));
    EXPECT_EQ(tokenize("a b c d", v, 3).pieces, (std::vector<std::string>{"[CLS]", "a", "[SEP]"}));
}

TEST(Tokenize, MaxLenTooSmall) {
    const auto v = vocab_with({});
    EXPECT_THROW(tokenize("x", v, 2), input_error);
}

TEST(Tokenize, PunctuationAndCaseUseNormalizedForm) {
    const auto v = vocab_with({"hello", "world", ",", "!"});
    EXPECT_EQ(real_pieces(tokenize("Hello, WORLD!", v, 16)),
              (std::vector<std::string>{"[CLS]", "hello", ",", "world", "!", "[SEP]"}));
}

TEST(Tokenize, MultibyteSegmentation) {
    const auto v = vocab_with({"\xC3\xA9", "##t", "##\xC3\xA9"});
    EXPECT_EQ(real_pieces(tokenize("\xC3\x89T\xC3\x89", v, 8)),
              (std::vector<std::string>{"[CLS]", "\xC3\xA9", "##t", "##\xC3\xA9", "[SEP]"}));
}

TEST(Tokenize, PropertiesOnSyntheticCorpus) {
    const auto corpus = testdata::make_synthetic_corpus(400, 5).records;
    std::vector<std::string> texts;
    for (std::size_t i = 0; i < 200; ++i) {
        texts.push_back(normalize(corpus[i].text));
    }
    const auto v = build_vocab(texts, 200, 2);
    detail::engine gen(1);
    for (const auto &r : corpus) {
        const std::size_t max_len = 3 + detail::uniform_below(gen, 30);
        const auto seq = tokenize(r.text + " qqq\xC3\xB1", v, max_len);
        ASSERT_EQ(seq.size(), max_len);
        ASSERT_EQ(seq.pieces.size(), max_len);
        ASSERT_EQ(seq.attention_mask.size(), max_len);
        EXPECT_EQ(seq.pieces[0], "[CLS]");
        const std::size_t active = seq.active();
        EXPECT_EQ(seq.pieces[active - 1], "[SEP]");
        for (std::size_t i = 0; i < max_len; ++i) {
            EXPECT_EQ(v.find(seq.pieces[i]), seq.ids[i]);
            EXPECT_EQ(seq.attention_mask[i] == 1, seq.pieces[i] != "[PAD]");
            EXPECT_EQ(seq.attention_mask[i] == 1, i < active);
        }
        const auto again = tokenize(r.text + " qqq\xC3\xB1", v, max_len);
        EXPECT_EQ(again.ids, seq.ids);
    }
}

TEST(Tokenize, ContinuationPiecesNeverStartAWord) {
    const auto corpus = testdata::make_synthetic_corpus(300, 6).records;
    std::vector<std::string> texts;
    for (const auto &r : corpus) {
        texts.push_back(normalize(r.text));
    }
    const auto v = build_vocab(texts, 120, 40);
    for (const auto &t : texts) {
        for (const auto &word : unicode::split_whitespace(t)) {
            const auto ids = segment_word(word, v);
            ASSERT_FALSE(ids.empty());
            EXPECT_FALSE(v.piece(ids[0]).starts_with("##"));
            for (std::size_t i = 1; i < ids.size(); ++i) {
                EXPECT_TRUE(v.piece(ids[i]).starts_with("##"));
            }
            std::string rebuilt;
            for (const int id : ids) {
                const auto &p = v.piece(id);
                rebuilt += p.starts_with("##") ? p.substr(2) : p;
            }
            EXPECT_EQ(rebuilt, word);
        }
    }
}
