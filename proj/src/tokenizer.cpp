// SPDX-License-Identifier: Apache-2.0
#include "ulma/tokenizer.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>

#include "json.hpp"
#include "ulma/errors.hpp"

namespace ulma {

namespace {

const char* kSpecialNames[Vocabulary::kNumSpecials] = {
    "<s>", "</s>", "<pad>", "<unk>", "<mask>", "EMOJI", "EMAIL", "PHONE"};

bool is_placeholder(const std::string& tok) {
  return tok == "EMOJI" || tok == "EMAIL" || tok == "PHONE";
}

// Splits a UTF-8 string into per-codepoint strings.
std::vector<std::string> utf8_chars(const std::string& s) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < s.size()) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    size_t len = 1;
    if (c >= 0xF0) len = 4;
    else if (c >= 0xE0) len = 3;
    else if (c >= 0xC0) len = 2;
    len = std::min(len, s.size() - i);
    out.push_back(s.substr(i, len));
    i += len;
  }
  return out;
}

std::string merge_key(const std::string& a, const std::string& b) {
  return a + '\x01' + b;
}

}  // namespace

Vocabulary::Vocabulary() {
  for (const char* name : kSpecialNames) add_token(name);
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw DataError("token id out of range: " + std::to_string(id));
  return tokens_[static_cast<size_t>(id)];
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? -1 : it->second;
}

int Vocabulary::add_token(const std::string& tok) {
  auto it = token_to_id_.find(tok);
  if (it != token_to_id_.end()) return it->second;
  const int id = size();
  tokens_.push_back(tok);
  token_to_id_.emplace(tok, id);
  return id;
}

void Vocabulary::add_merge(const std::string& a, const std::string& b) {
  merge_rank_.emplace(merge_key(a, b), static_cast<int>(merges_.size()));
  merges_.emplace_back(a, b);
}

std::vector<std::string> Vocabulary::split_word(const std::string& word) const {
  std::vector<std::string> sym = utf8_chars(word);
  if (sym.empty()) return {};
  sym.back() += kWordEnd;
  while (sym.size() > 1) {
    int best_rank = std::numeric_limits<int>::max();
    for (size_t i = 0; i + 1 < sym.size(); ++i) {
      auto it = merge_rank_.find(merge_key(sym[i], sym[i + 1]));
      if (it != merge_rank_.end() && it->second < best_rank) best_rank = it->second;
    }
    if (best_rank == std::numeric_limits<int>::max()) break;
    const auto& [a, b] = merges_[static_cast<size_t>(best_rank)];
    std::vector<std::string> next;
    next.reserve(sym.size());
    for (size_t i = 0; i < sym.size();) {
      if (i + 1 < sym.size() && sym[i] == a && sym[i + 1] == b) {
        next.push_back(a + b);
        i += 2;
      } else {
        next.push_back(sym[i]);
        ++i;
      }
    }
    sym = std::move(next);
  }
  return sym;
}

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpus, int target_size) {
  // Word types with frequencies; placeholders are atomic specials and do not
  // take part in merging.
  std::map<std::string, int64_t> word_freq;
  for (const auto& doc : corpus) {
    for (const auto& tok : doc) {
      if (!is_placeholder(tok)) ++word_freq[tok];
    }
  }
  if (word_freq.empty()) throw DataError("empty corpus: no tokens to build a vocabulary from");

  Vocabulary vocab;

  std::map<std::string, std::pair<std::vector<std::string>, int64_t>> types;
  std::map<std::string, int64_t> alphabet;
  for (const auto& [word, freq] : word_freq) {
    auto sym = utf8_chars(word);
    if (!sym.empty()) sym.back() += Vocabulary::kWordEnd;
    for (const auto& c : sym) alphabet[c] += freq;
    types[word] = {std::move(sym), freq};
  }
  for (const auto& [c, freq] : alphabet) vocab.add_token(c);

  if (target_size < vocab.size()) {
    throw UsageError("vocab target_size " + std::to_string(target_size) +
                     " is below specials + alphabet (" + std::to_string(vocab.size()) + ")");
  }

  while (vocab.size() < target_size) {
    // std::map iteration is lexicographic, so the first maximum is the
    // lexicographically smallest pair — the documented tie-break.
    std::map<std::pair<std::string, std::string>, int64_t> pair_freq;
    for (const auto& [word, entry] : types) {
      const auto& sym = entry.first;
      for (size_t i = 0; i + 1 < sym.size(); ++i) {
        pair_freq[{sym[i], sym[i + 1]}] += entry.second;
      }
    }
    int64_t best = 0;
    const std::pair<std::string, std::string>* best_pair = nullptr;
    for (const auto& [p, freq] : pair_freq) {
      if (freq > best) {
        best = freq;
        best_pair = &p;
      }
    }
    if (best_pair == nullptr) break;  // merges exhausted

    const auto [a, b] = *best_pair;
    vocab.add_merge(a, b);
    vocab.add_token(a + b);
    for (auto& [word, entry] : types) {
      auto& sym = entry.first;
      std::vector<std::string> next;
      next.reserve(sym.size());
      for (size_t i = 0; i < sym.size();) {
        if (i + 1 < sym.size() && sym[i] == a && sym[i + 1] == b) {
          next.push_back(a + b);
          i += 2;
        } else {
          next.push_back(sym[i]);
          ++i;
        }
      }
      sym = std::move(next);
    }
  }
  return vocab;
}

std::vector<int32_t> encode(const Vocabulary& vocab, const std::vector<std::string>& tokens, int max_len) {
  if (max_len < 2) throw UsageError("encode: max_len must be >= 2");
  std::vector<int32_t> ids;
  ids.push_back(Vocabulary::kBos);
  for (const auto& tok : tokens) {
    if (tok == "EMOJI") {
      ids.push_back(Vocabulary::kEmoji);
    } else if (tok == "EMAIL") {
      ids.push_back(Vocabulary::kEmail);
    } else if (tok == "PHONE") {
      ids.push_back(Vocabulary::kPhone);
    } else {
      for (const auto& piece : vocab.split_word(tok)) {
        const int id = vocab.id_of(piece);
        ids.push_back(id < 0 ? Vocabulary::kUnk : id);
      }
    }
  }
  if (static_cast<int>(ids.size()) + 1 > max_len) {
    ids.resize(static_cast<size_t>(max_len - 1));
  }
  ids.push_back(Vocabulary::kEos);
  return ids;
}

std::vector<std::string> decode(const Vocabulary& vocab, const std::vector<int32_t>& ids) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (int32_t id : ids) {
    if (id < 0 || id >= vocab.size()) {
      throw DataError("decode: token id out of range: " + std::to_string(id));
    }
    switch (id) {
      case Vocabulary::kBos:
      case Vocabulary::kEos:
      case Vocabulary::kPad:
        continue;
      case Vocabulary::kMask:
      case Vocabulary::kUnk:
      case Vocabulary::kEmoji:
      case Vocabulary::kEmail:
      case Vocabulary::kPhone:
        flush();
        out.push_back(vocab.token(id));
        continue;
      default:
        break;
    }
    std::string piece = vocab.token(id);
    const std::string marker = Vocabulary::kWordEnd;
    bool ends_word = false;
    if (piece.size() >= marker.size() &&
        piece.compare(piece.size() - marker.size(), marker.size(), marker) == 0) {
      piece.resize(piece.size() - marker.size());
      ends_word = true;
    }
    cur += piece;
    if (ends_word) flush();
  }
  flush();
  return out;
}

void Vocabulary::save(const std::string& path) const {
  nlohmann::json j;
  j["specials"] = nlohmann::json::object();
  for (int i = 0; i < kNumSpecials; ++i) j["specials"][kSpecialNames[i]] = i;
  j["merges"] = nlohmann::json::array();
  for (const auto& [a, b] : merges_) j["merges"].push_back({a, b});
  j["tokens"] = tokens_;

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write vocabulary file: " + path);
    out << j.dump(1, '\t') << '\n';
  }
  std::filesystem::rename(tmp, path);
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open vocabulary file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed vocabulary JSON in " + path + ": " + e.what());
  }

  Vocabulary vocab;
  const auto& toks = j.at("tokens");
  for (size_t i = 0; i < toks.size(); ++i) {
    const std::string t = toks[i].get<std::string>();
    if (static_cast<int>(i) < kNumSpecials) {
      if (t != kSpecialNames[i]) {
        throw DataError("vocabulary file " + path + ": special token mismatch at id " +
                        std::to_string(i));
      }
      continue;
    }
    if (vocab.add_token(t) != static_cast<int>(i)) {
      throw DataError("vocabulary file " + path + ": duplicate token '" + t + "'");
    }
  }
  for (const auto& m : j.at("merges")) {
    vocab.add_merge(m.at(0).get<std::string>(), m.at(1).get<std::string>());
  }
  return vocab;
}

}  // namespace ulma
