// SPDX-License-Identifier: Apache-2.0
#include "ulma/synth.hpp"

#include <array>
#include <string>

#include "ulma/errors.hpp"
#include "ulma/rng.hpp"

namespace ulma {
namespace {

constexpr std::array kShared = {
    "the",  "a",     "to",   "and",  "you",  "is",   "of",    "in",    "it",    "for",
    "on",   "my",    "we",   "that", "this", "was",  "with",  "at",    "but",   "they",
    "so",   "what",  "just", "now",  "her",  "him",  "them",  "me",    "all",   "really",
    "very", "today", "then", "when", "who",  "said", "going", "about", "still", "again"};

constexpr std::array kCleanTopic = {
    "coffee",  "garden", "recipe",  "weather", "football", "holiday", "music",  "painting",
    "puppy",   "lunch",  "movie",   "morning", "bicycle",  "river",   "market", "sunset",
    "reading", "friend", "weekend", "concert"};

// Invented insult-like coinages; none are real words.
constexpr std::array kOffensiveMarker = {
    "glopnard", "snarfwit", "drubble",  "mubblehead", "quazzing", "frumious", "skoffle",
    "blatherk", "gormslop", "twerpling", "dungeloid", "crapulent", "sloppage", "nitwump"};

// Invented group-directed hostility markers, equally synthetic.
constexpr std::array kHateMarker = {
    "zorblins", "grekkits", "vroshkin", "drexards", "morklets", "quibbers", "snuvvers",
    "banishment", "purgewave", "zorbkind", "grekspawn", "vroshfolk", "drexkind", "quibberkin"};

constexpr std::array kEmoji = {"😀", "🔥", "💀", "👍", "🎉", "😡", "🙄"};

const char* pick(Rng& rng, const char* const* pool, size_t n) {
  return pool[rng.uniform_int(static_cast<uint64_t>(n))];
}

std::string make_phone(Rng& rng) {
  std::string s = rng.uniform() < 0.3 ? "+" : "";
  const int digits = 9 + static_cast<int>(rng.uniform_int(3));
  for (int i = 0; i < digits; ++i) s += static_cast<char>('0' + rng.uniform_int(10));
  return s;
}

std::string make_email(Rng& rng) {
  std::string s = "user";
  for (int i = 0; i < 3; ++i) s += static_cast<char>('0' + rng.uniform_int(10));
  s += "@example.com";
  return s;
}

std::string upcase_ascii(std::string s) {
  for (char& c : s) {
    if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
  }
  return s;
}

std::string make_document(Rng& rng, Label label) {
  const int len = 6 + static_cast<int>(rng.uniform_int(11));
  std::string text;
  for (int i = 0; i < len; ++i) {
    std::string word;
    const double roll = rng.uniform();
    switch (label) {
      case Label::kHate:
        if (roll < 0.30) {
          word = pick(rng, kHateMarker.data(), kHateMarker.size());
        } else if (roll < 0.40) {
          word = pick(rng, kOffensiveMarker.data(), kOffensiveMarker.size());
        } else {
          word = pick(rng, kShared.data(), kShared.size());
        }
        break;
      case Label::kOffensive:
        if (roll < 0.35) {
          word = pick(rng, kOffensiveMarker.data(), kOffensiveMarker.size());
        } else {
          word = pick(rng, kShared.data(), kShared.size());
        }
        break;
      case Label::kClean:
        if (roll < 0.30) {
          word = pick(rng, kCleanTopic.data(), kCleanTopic.size());
        } else {
          word = pick(rng, kShared.data(), kShared.size());
        }
        break;
    }
    if (rng.uniform() < 0.04) word = upcase_ascii(word);
    if (!text.empty()) text += ' ';
    text += word;
    if (rng.uniform() < 0.03) text += "!!!";
  }
  if (rng.uniform() < 0.12) {
    text += ' ';
    text += pick(rng, kEmoji.data(), kEmoji.size());
  }
  if (rng.uniform() < 0.03) text += " call " + make_phone(rng);
  if (rng.uniform() < 0.03) text += " mail " + make_email(rng);
  return text;
}

}  // namespace

std::vector<RawDocument> generate_synthetic(const SynthSpec& spec) {
  if (spec.num_hate < 0 || spec.num_offensive < 0 || spec.num_clean < 0) {
    throw UsageError("synthetic corpus: negative class count");
  }
  if (spec.num_hate + spec.num_offensive + spec.num_clean == 0) {
    throw UsageError("synthetic corpus: nothing to generate");
  }
  Rng rng(substream(spec.seed, Stream::kSynth));
  std::vector<RawDocument> docs;
  docs.reserve(static_cast<size_t>(spec.num_hate + spec.num_offensive + spec.num_clean));
  for (int i = 0; i < spec.num_hate; ++i) {
    docs.push_back({make_document(rng, Label::kHate), Label::kHate});
  }
  for (int i = 0; i < spec.num_offensive; ++i) {
    docs.push_back({make_document(rng, Label::kOffensive), Label::kOffensive});
  }
  for (int i = 0; i < spec.num_clean; ++i) {
    docs.push_back({make_document(rng, Label::kClean), Label::kClean});
  }
  rng.shuffle(docs);
  return docs;
}

}  // namespace ulma
