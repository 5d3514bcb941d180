// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ulma/encoder.hpp"
#include "ulma/text.hpp"
#include "ulma/tokenizer.hpp"

namespace ulma {

struct TsvStats {
  size_t lines = 0;
  size_t comments = 0;
  size_t blanks = 0;
  size_t malformed = 0;
  size_t docs = 0;
};

// Reads `label<TAB>text` lines. `-` marks an unlabeled row, `#` starts a
// comment line, blank lines are ignored. Lines without a tab are skipped
// (reported through `warn` when given). An unknown label is a data error.
std::vector<RawDocument> read_tsv(const std::string& path, TsvStats* stats = nullptr,
                                  std::ostream* warn = nullptr);
std::vector<RawDocument> read_tsv_stream(std::istream& in, const std::string& name,
                                         TsvStats* stats = nullptr, std::ostream* warn = nullptr);

// Writes documents in the same format, atomically. Tabs and newlines inside
// the text are replaced with spaces so the file stays parseable.
void write_tsv(const std::string& path, const std::vector<RawDocument>& docs);

struct EncodedDoc {
  std::vector<int32_t> ids;
  std::optional<Label> label;
};

EncodedDoc encode_document(const Vocabulary& vocab, const RawDocument& doc, int max_len);
std::vector<EncodedDoc> encode_corpus(const Vocabulary& vocab,
                                      const std::vector<RawDocument>& docs, int max_len);

// Pads the selected documents to the longest sequence among them. Labels are
// attached only when every selected document carries one.
Batch make_batch(const std::vector<EncodedDoc>& docs, const std::vector<int>& indices,
                 int32_t pad_id);

}  // namespace ulma
