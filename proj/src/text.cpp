// SPDX-License-Identifier: Apache-2.0
#include "ulma/text.hpp"

#include <unicode/uchar.h>
#include <unicode/unorm2.h>
#include <unicode/ustring.h>
#include <unicode/utf16.h>
#include <unicode/utf8.h>

#include <cstring>
#include <regex>

#include "ulma/errors.hpp"

namespace ulma {

const char* label_name(Label l) {
  switch (l) {
    case Label::kClean: return "CLEAN";
    case Label::kOffensive: return "OFFENSIVE";
    case Label::kHate: return "HATE";
  }
  throw InternalError("label_name: invalid label value");
}

std::optional<Label> parse_label(const std::string& s) {
  if (s == "-") return std::nullopt;
  if (s == "CLEAN") return Label::kClean;
  if (s == "OFFENSIVE") return Label::kOffensive;
  if (s == "HATE") return Label::kHate;
  throw DataError("unknown label: '" + s + "'");
}

namespace {

void append_utf8(std::string& out, UChar32 cp) {
  char buf[U8_MAX_LENGTH];
  int32_t len = 0;
  UBool err = false;
  U8_APPEND(reinterpret_cast<uint8_t*>(buf), len, U8_MAX_LENGTH, cp, err);
  if (!err) out.append(buf, static_cast<size_t>(len));
}

std::vector<UChar32> decode_utf8(const std::string& s) {
  std::vector<UChar32> cps;
  cps.reserve(s.size());
  int32_t i = 0;
  const int32_t n = static_cast<int32_t>(s.size());
  const uint8_t* p = reinterpret_cast<const uint8_t*>(s.data());
  while (i < n) {
    UChar32 cp;
    U8_NEXT(p, i, n, cp);
    if (cp < 0) cp = 0xFFFD;  // invalid byte sequence
    cps.push_back(cp);
  }
  return cps;
}

std::string encode_utf8(const std::vector<UChar32>& cps) {
  std::string out;
  out.reserve(cps.size());
  for (UChar32 cp : cps) append_utf8(out, cp);
  return out;
}

std::vector<UChar32> nfc(const std::vector<UChar32>& in) {
  UErrorCode status = U_ZERO_ERROR;
  const UNormalizer2* norm = unorm2_getNFCInstance(&status);
  if (U_FAILURE(status)) throw InternalError("ICU: NFC instance unavailable");

  std::u16string u16;
  u16.reserve(in.size() + 8);
  for (UChar32 cp : in) {
    if (U16_LENGTH(cp) == 1) {
      u16.push_back(static_cast<char16_t>(cp));
    } else {
      u16.push_back(static_cast<char16_t>(U16_LEAD(cp)));
      u16.push_back(static_cast<char16_t>(U16_TRAIL(cp)));
    }
  }

  std::u16string dst(u16.size() + 16, u'\0');
  status = U_ZERO_ERROR;
  int32_t len = unorm2_normalize(norm, u16.data(), static_cast<int32_t>(u16.size()),
                                 dst.data(), static_cast<int32_t>(dst.size()), &status);
  if (status == U_BUFFER_OVERFLOW_ERROR) {
    dst.assign(static_cast<size_t>(len), u'\0');
    status = U_ZERO_ERROR;
    len = unorm2_normalize(norm, u16.data(), static_cast<int32_t>(u16.size()),
                           dst.data(), static_cast<int32_t>(dst.size()), &status);
  }
  if (U_FAILURE(status)) throw InternalError("ICU: NFC normalization failed");

  std::vector<UChar32> out;
  out.reserve(static_cast<size_t>(len));
  int32_t i = 0;
  while (i < len) {
    UChar32 cp;
    U16_NEXT(dst.data(), i, len, cp);
    out.push_back(cp);
  }
  return out;
}

// The UCD Emoji property also covers ASCII (#, *, 0-9) and a couple of
// Latin-1 signs; treating those as emoji would eat phone numbers before PII
// masking, so the predicate is restricted to codepoints above Latin-1.
bool is_emoji(UChar32 cp) {
  return cp > 0xFF && u_hasBinaryProperty(cp, UCHAR_EMOJI);
}

bool is_emoji_component(UChar32 cp) {
  return cp > 0xFF && (u_hasBinaryProperty(cp, UCHAR_EMOJI_COMPONENT) ||
                       u_hasBinaryProperty(cp, UCHAR_EMOJI_MODIFIER));
}

const char* const kPlaceholders[] = {"EMOJI", "EMAIL", "PHONE"};

bool is_word_cp(UChar32 cp) { return u_isalnum(cp); }

// Marks standalone occurrences of the placeholder literals so lowercasing
// leaves them intact (required for idempotence of the pipeline).
std::vector<bool> protected_spans(const std::vector<UChar32>& cps) {
  std::vector<bool> keep(cps.size(), false);
  for (const char* lit : kPlaceholders) {
    const size_t m = std::strlen(lit);
    if (cps.size() < m) continue;
    for (size_t i = 0; i + m <= cps.size(); ++i) {
      bool match = true;
      for (size_t j = 0; j < m; ++j) {
        if (cps[i + j] != static_cast<UChar32>(lit[j])) {
          match = false;
          break;
        }
      }
      if (!match) continue;
      const bool left_ok = i == 0 || !is_word_cp(cps[i - 1]);
      const bool right_ok = i + m == cps.size() || !is_word_cp(cps[i + m]);
      if (left_ok && right_ok) {
        for (size_t j = 0; j < m; ++j) keep[i + j] = true;
      }
    }
  }
  return keep;
}

}  // namespace

std::string normalize_text(const std::string& text) {
  std::vector<UChar32> cps = nfc(decode_utf8(text));

  const std::vector<bool> keep = protected_spans(cps);
  for (size_t i = 0; i < cps.size(); ++i) {
    if (!keep[i]) cps[i] = u_tolower(cps[i]);
  }

  std::vector<UChar32> out;
  out.reserve(cps.size());
  size_t i = 0;
  while (i < cps.size()) {
    if (is_emoji(cps[i]) || is_emoji_component(cps[i])) {
      size_t j = i;
      bool has_emoji = false;
      while (j < cps.size() && (is_emoji(cps[j]) || is_emoji_component(cps[j]))) {
        has_emoji = has_emoji || is_emoji(cps[j]);
        ++j;
      }
      if (has_emoji) {
        if (!out.empty() && !u_isUWhiteSpace(out.back())) out.push_back(' ');
        for (const char* p = "EMOJI"; *p; ++p) out.push_back(*p);
        if (j < cps.size() && !u_isUWhiteSpace(cps[j])) out.push_back(' ');
        i = j;
        continue;
      }
      // component codepoints with no emoji in the run fall through unchanged
      for (; i < j; ++i) out.push_back(cps[i]);
      continue;
    }
    out.push_back(cps[i]);
    ++i;
  }
  return encode_utf8(out);
}

std::string mask_pii(const std::string& text) {
  static const std::regex kEmail(
      R"(([a-z0-9._%+-]+)@([a-z0-9-]+\.)+[a-z]{2,})",
      std::regex::ECMAScript | std::regex::optimize);
  std::string s = std::regex_replace(text, kEmail, "EMAIL");

  // Digit runs of length 9-11, optional '+' prefix. Byte-level scan is exact
  // about run maximality (a 12-digit run must stay untouched).
  std::string out;
  out.reserve(s.size());
  size_t i = 0;
  while (i < s.size()) {
    const bool plus = s[i] == '+';
    const size_t start = plus ? i + 1 : i;
    if (start < s.size() && std::isdigit(static_cast<unsigned char>(s[start]))) {
      size_t j = start;
      while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
      const size_t run = j - start;
      if (run >= 9 && run <= 11) {
        out += "PHONE";
        i = j;
        continue;
      }
      out.append(s, i, j - i);
      i = j;
      continue;
    }
    out.push_back(s[i]);
    ++i;
  }
  return out;
}

std::vector<std::string> split_tokens(const std::string& text) {
  static const char* kAsciiSymbolPunct = "$+<=>^`|~";
  auto is_punct = [](UChar32 cp) {
    if (u_ispunct(cp)) return true;
    return cp < 0x80 && std::strchr(kAsciiSymbolPunct, static_cast<int>(cp)) != nullptr;
  };

  std::vector<std::string> tokens;
  std::string cur;
  for (UChar32 cp : decode_utf8(text)) {
    if (u_isUWhiteSpace(cp)) {
      if (!cur.empty()) tokens.push_back(std::move(cur)), cur.clear();
    } else if (is_punct(cp)) {
      if (!cur.empty()) tokens.push_back(std::move(cur)), cur.clear();
      std::string p;
      append_utf8(p, cp);
      tokens.push_back(std::move(p));
    } else {
      append_utf8(cur, cp);
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

CleanDocument clean_document(const RawDocument& doc) {
  return CleanDocument{split_tokens(mask_pii(normalize_text(doc.text))), doc.label};
}

}  // namespace ulma
