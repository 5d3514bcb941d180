// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ulma/text.hpp"

namespace ulma {

// Subword vocabulary learned by byte-pair merging over the characters of
// whitespace tokens, with an end-of-word marker. Ids are dense 0..V-1 and
// the special tokens occupy the lowest ids.
class Vocabulary {
 public:
  static constexpr int kBos = 0;    // <s>
  static constexpr int kEos = 1;    // </s>
  static constexpr int kPad = 2;    // <pad>
  static constexpr int kUnk = 3;    // <unk>
  static constexpr int kMask = 4;   // <mask>
  static constexpr int kEmoji = 5;  // EMOJI
  static constexpr int kEmail = 6;  // EMAIL
  static constexpr int kPhone = 7;  // PHONE
  static constexpr int kNumSpecials = 8;

  static constexpr const char* kWordEnd = "</w>";

  Vocabulary();

  int size() const { return static_cast<int>(tokens_.size()); }
  bool is_special(int id) const { return id >= 0 && id < kNumSpecials; }
  const std::string& token(int id) const;
  // -1 when absent.
  int id_of(const std::string& token) const;

  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }

  // Splits one surface token into subword strings by applying the learned
  // merges in rank order.
  std::vector<std::string> split_word(const std::string& word) const;

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  friend Vocabulary build_vocab(const std::vector<std::vector<std::string>>&, int);

  int add_token(const std::string& tok);
  void add_merge(const std::string& a, const std::string& b);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::pair<std::string, std::string>> merges_;
  std::unordered_map<std::string, int> merge_rank_;  // key: a + '\x01' + b
};

// Learns merges from the corpus until the vocabulary reaches target_size
// entries (or merges exhaust). Deterministic given corpus order: pair
// frequency ties break by lexicographic pair order.
Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpus, int target_size);

// <s> + subword ids + </s>, truncated to max_len keeping </s> last.
std::vector<int32_t> encode(const Vocabulary& vocab, const std::vector<std::string>& tokens, int max_len);

// Inverse of encode on in-vocabulary text. <s>/</s>/<pad> are stripped;
// <mask> and <unk> decode to visible placeholders.
std::vector<std::string> decode(const Vocabulary& vocab, const std::vector<int32_t>& ids);

}  // namespace ulma
