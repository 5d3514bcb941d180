// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

namespace ulma {

// The three target classes. Order is fixed project-wide: reports, confusion
// matrices and class-indexed tensors all use this numbering.
enum class Label : int { kClean = 0, kOffensive = 1, kHate = 2 };
inline constexpr int kNumClasses = 3;

const char* label_name(Label l);
// Parses CLEAN / OFFENSIVE / HATE; returns nullopt for the unlabeled marker
// "-"; throws DataError for anything else.
std::optional<Label> parse_label(const std::string& s);

struct RawDocument {
  std::string text;
  std::optional<Label> label;
};

struct CleanDocument {
  std::vector<std::string> tokens;
  std::optional<Label> label;
};

// NFC-normalizes, lowercases (simple Unicode mapping), and replaces every
// emoji run with the literal token EMOJI. Runs of consecutive emoji collapse
// to a single EMOJI, padded with spaces where needed so the placeholder
// stays a standalone token. The placeholder tokens EMOJI / EMAIL / PHONE are
// preserved verbatim when already present, which makes the function
// idempotent.
std::string normalize_text(const std::string& text);

// Replaces email addresses (local@domain.tld, tld >= 2 letters) with EMAIL
// and digit runs of length 9-11 (optional leading '+') with PHONE. Expects
// normalized input.
std::string mask_pii(const std::string& text);

// Splits on Unicode whitespace and detaches punctuation characters as their
// own tokens. Never emits empty tokens.
std::vector<std::string> split_tokens(const std::string& text);

// normalize -> mask -> split.
CleanDocument clean_document(const RawDocument& doc);

}  // namespace ulma
