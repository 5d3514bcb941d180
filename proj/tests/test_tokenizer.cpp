// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "doctest.h"
#include "ulma/errors.hpp"
#include "ulma/rng.hpp"
#include "ulma/tokenizer.hpp"

using ulma::build_vocab;
using ulma::decode;
using ulma::encode;
using ulma::Vocabulary;

namespace {

using Corpus = std::vector<std::vector<std::string>>;

// Independent reference trainer: recount adjacent pair frequencies over the
// word types, take the most frequent pair (lexicographically smallest on
// ties), merge it everywhere, repeat.
std::vector<std::pair<std::string, std::string>> reference_merges(const Corpus& corpus,
                                                                  int max_merges) {
  std::map<std::string, long long> freq;
  for (const auto& doc : corpus) {
    for (const auto& w : doc) ++freq[w];
  }
  std::map<std::string, std::pair<std::vector<std::string>, long long>> words;
  for (const auto& [w, f] : freq) {
    std::vector<std::string> sym;
    for (char c : w) sym.push_back(std::string(1, c));  // ASCII corpora only
    if (!sym.empty()) sym.back() += Vocabulary::kWordEnd;
    words[w] = {sym, f};
  }
  std::vector<std::pair<std::string, std::string>> merges;
  for (int step = 0; step < max_merges; ++step) {
    std::map<std::pair<std::string, std::string>, long long> pairs;
    for (const auto& [w, entry] : words) {
      const auto& sym = entry.first;
      for (size_t i = 0; i + 1 < sym.size(); ++i) pairs[{sym[i], sym[i + 1]}] += entry.second;
    }
    if (pairs.empty()) break;
    auto best = pairs.begin();
    for (auto it = pairs.begin(); it != pairs.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    if (best->second < 1) break;
    const auto [a, b] = best->first;
    merges.push_back({a, b});
    for (auto& [w, entry] : words) {
      auto& sym = entry.first;
      std::vector<std::string> next;
      size_t i = 0;
      while (i < sym.size()) {
        if (i + 1 < sym.size() && sym[i] == a && sym[i + 1] == b) {
          next.push_back(a + b);
          i += 2;
        } else {
          next.push_back(sym[i]);
          ++i;
        }
      }
      sym = next;
    }
  }
  return merges;
}

std::string temp_path(const char* name) {
  return std::string("./") + name;
}

}  // namespace

TEST_CASE("most frequent pair merges first, counted at every adjacent position") {
  Corpus corpus(10, {"aaab"});
  const Vocabulary vocab = build_vocab(corpus, 100);
  REQUIRE(!vocab.merges().empty());
  CHECK(vocab.merges()[0] == std::pair<std::string, std::string>{"a", "a"});
}

TEST_CASE("frequency ties break toward the lexicographically smaller pair") {
  Corpus corpus;
  for (int i = 0; i < 5; ++i) corpus.push_back({"cd", "ab"});
  const Vocabulary vocab = build_vocab(corpus, 100);
  REQUIRE(!vocab.merges().empty());
  CHECK(vocab.merges()[0] == std::pair<std::string, std::string>{"a", "b</w>"});
}

TEST_CASE("merge sequence matches the reference trainer on random corpora") {
  ulma::Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    Corpus corpus;
    const int docs = 3 + static_cast<int>(rng.uniform_int(5));
    for (int d = 0; d < docs; ++d) {
      std::vector<std::string> doc;
      const int words = 2 + static_cast<int>(rng.uniform_int(8));
      for (int w = 0; w < words; ++w) {
        std::string word;
        const int len = 1 + static_cast<int>(rng.uniform_int(5));
        for (int c = 0; c < len; ++c) {
          word += static_cast<char>('a' + rng.uniform_int(3));
        }
        doc.push_back(word);
      }
      corpus.push_back(doc);
    }
    const Vocabulary vocab = build_vocab(corpus, 200);
    const auto expect = reference_merges(corpus, static_cast<int>(vocab.merges().size()));
    REQUIRE(vocab.merges().size() == expect.size());
    for (size_t i = 0; i < expect.size(); ++i) {
      CAPTURE(trial);
      CAPTURE(i);
      CHECK(vocab.merges()[i] == expect[i]);
    }
  }
}

TEST_CASE("building twice gives identical vocabularies") {
  Corpus corpus = {{"hello", "world"}, {"hello", "again", "world"}, {"low", "lower", "lowest"}};
  const Vocabulary a = build_vocab(corpus, 80);
  const Vocabulary b = build_vocab(corpus, 80);
  CHECK(a.tokens() == b.tokens());
  CHECK(a.merges() == b.merges());
}

TEST_CASE("special tokens occupy the fixed low ids") {
  const Vocabulary vocab = build_vocab({{"ab"}}, 50);
  CHECK(vocab.token(Vocabulary::kBos) == "<s>");
  CHECK(vocab.token(Vocabulary::kEos) == "</s>");
  CHECK(vocab.token(Vocabulary::kPad) == "<pad>");
  CHECK(vocab.token(Vocabulary::kUnk) == "<unk>");
  CHECK(vocab.token(Vocabulary::kMask) == "<mask>");
  CHECK(vocab.token(Vocabulary::kEmoji) == "EMOJI");
  CHECK(vocab.token(Vocabulary::kEmail) == "EMAIL");
  CHECK(vocab.token(Vocabulary::kPhone) == "PHONE");
  CHECK(vocab.id_of("<mask>") == Vocabulary::kMask);
  CHECK(vocab.id_of("definitely-not-there") == -1);
}

TEST_CASE("encode/decode round-trips in-vocabulary text") {
  Corpus corpus;
  for (int i = 0; i < 20; ++i) corpus.push_back({"the", "cat", "sat", "on", "the", "mat"});
  const Vocabulary vocab = build_vocab(corpus, 200);
  const std::vector<std::string> tokens = {"the", "cat", "EMOJI", "sat", "PHONE"};
  const auto ids = encode(vocab, tokens, 64);
  REQUIRE(ids.size() >= 2);
  CHECK(ids.front() == Vocabulary::kBos);
  CHECK(ids.back() == Vocabulary::kEos);
  CHECK(decode(vocab, ids) == tokens);
}

TEST_CASE("unknown pieces encode as <unk> and decode visibly") {
  const Vocabulary vocab = build_vocab({{"aa", "bb"}}, 50);
  const auto ids = encode(vocab, {"zz"}, 16);
  bool has_unk = false;
  for (int32_t id : ids) has_unk = has_unk || id == Vocabulary::kUnk;
  CHECK(has_unk);
  const auto back = decode(vocab, ids);
  bool visible = false;
  for (const auto& tok : back) visible = visible || tok == "<unk>";
  CHECK(visible);
}

TEST_CASE("encode truncates to max_len and keeps the end marker last") {
  Corpus corpus(5, {"abcdefgh", "ijklmnop"});
  const Vocabulary vocab = build_vocab(corpus, 40);
  std::vector<std::string> long_doc(50, "abcdefgh");
  const auto ids = encode(vocab, long_doc, 16);
  CHECK(ids.size() == 16);
  CHECK(ids.front() == Vocabulary::kBos);
  CHECK(ids.back() == Vocabulary::kEos);
}

TEST_CASE("save/load round-trips the vocabulary") {
  Corpus corpus = {{"share", "and", "enjoy"}, {"share", "again"}};
  const Vocabulary vocab = build_vocab(corpus, 60);
  const std::string path = temp_path("vocab_roundtrip.json");
  vocab.save(path);
  const Vocabulary loaded = Vocabulary::load(path);
  CHECK(loaded.tokens() == vocab.tokens());
  CHECK(loaded.merges() == vocab.merges());
  CHECK(loaded.split_word("share") == vocab.split_word("share"));
  std::remove(path.c_str());
}

TEST_CASE("vocabulary construction validates its inputs") {
  CHECK_THROWS_AS(build_vocab({}, 100), ulma::DataError);
  CHECK_THROWS_AS(build_vocab({{"EMOJI"}}, 100), ulma::DataError);  // placeholders only
  CHECK_THROWS_AS(build_vocab({{"abc"}}, 3), ulma::UsageError);     // below the floor
  CHECK_THROWS_AS(Vocabulary::load("./no_such_vocab_file.json"), ulma::DataError);
}

TEST_CASE("split_word applies merges greedily left to right in rank order") {
  Corpus corpus(10, {"aaab"});
  const Vocabulary vocab = build_vocab(corpus, 100);
  // With enough merges the whole word becomes one token.
  const auto pieces = vocab.split_word("aaab");
  std::string joined;
  for (const auto& p : pieces) joined += p;
  CHECK(joined == std::string("aaab") + Vocabulary::kWordEnd);
  const auto full = vocab.split_word("aaab");
  CHECK(full.size() == 1);
}
