// SPDX-License-Identifier: Apache-2.0
#include "ulma/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "ulma/errors.hpp"

namespace ulma {

std::vector<RawDocument> read_tsv_stream(std::istream& in, const std::string& name,
                                         TsvStats* stats, std::ostream* warn) {
  std::vector<RawDocument> docs;
  TsvStats local;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    ++local.lines;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      ++local.blanks;
      continue;
    }
    if (line[0] == '#') {
      ++local.comments;
      continue;
    }
    const size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      ++local.malformed;
      if (warn != nullptr) {
        *warn << "warning: " << name << ":" << lineno << ": skipped line without tab separator\n";
      }
      continue;
    }
    const std::string label_field = line.substr(0, tab);
    std::optional<Label> label;
    try {
      label = parse_label(label_field);
    } catch (const DataError& e) {
      throw DataError(name + ":" + std::to_string(lineno) + ": " + e.what());
    }
    docs.push_back({line.substr(tab + 1), label});
    ++local.docs;
  }
  if (stats != nullptr) *stats = local;
  if (docs.empty()) throw DataError(name + ": no usable documents");
  return docs;
}

std::vector<RawDocument> read_tsv(const std::string& path, TsvStats* stats, std::ostream* warn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return read_tsv_stream(in, path, stats, warn);
}

void write_tsv(const std::string& path, const std::vector<RawDocument>& docs) {
  std::ostringstream out;
  for (const auto& doc : docs) {
    out << (doc.label ? label_name(*doc.label) : "-") << '\t';
    for (char c : doc.text) out << (c == '\t' || c == '\n' || c == '\r' ? ' ' : c);
    out << '\n';
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open " + tmp + " for writing");
    const std::string bytes = out.str();
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("write to " + tmp + " failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw DataError("cannot move " + tmp + " into place at " + path);
  }
}

EncodedDoc encode_document(const Vocabulary& vocab, const RawDocument& doc, int max_len) {
  const CleanDocument clean = clean_document(doc);
  return {encode(vocab, clean.tokens, max_len), clean.label};
}

std::vector<EncodedDoc> encode_corpus(const Vocabulary& vocab,
                                      const std::vector<RawDocument>& docs, int max_len) {
  std::vector<EncodedDoc> out;
  out.reserve(docs.size());
  for (const auto& doc : docs) out.push_back(encode_document(vocab, doc, max_len));
  return out;
}

Batch make_batch(const std::vector<EncodedDoc>& docs, const std::vector<int>& indices,
                 int32_t pad_id) {
  if (indices.empty()) throw DataError("make_batch: empty index list");
  int seq = 0;
  bool all_labeled = true;
  for (int idx : indices) {
    if (idx < 0 || static_cast<size_t>(idx) >= docs.size()) {
      throw DataError("make_batch: document index " + std::to_string(idx) +
                      " outside the corpus of " + std::to_string(docs.size()));
    }
    const EncodedDoc& d = docs[static_cast<size_t>(idx)];
    seq = std::max(seq, static_cast<int>(d.ids.size()));
    all_labeled = all_labeled && d.label.has_value();
  }
  Batch batch;
  batch.batch = static_cast<int>(indices.size());
  batch.seq = seq;
  batch.token_ids.assign(static_cast<size_t>(batch.batch) * seq, pad_id);
  batch.attn_mask.assign(static_cast<size_t>(batch.batch) * seq, 0);
  if (all_labeled) batch.labels.reserve(indices.size());
  for (size_t b = 0; b < indices.size(); ++b) {
    const EncodedDoc& d = docs.at(static_cast<size_t>(indices[b]));
    for (size_t t = 0; t < d.ids.size(); ++t) {
      batch.token_ids[b * static_cast<size_t>(seq) + t] = d.ids[t];
      batch.attn_mask[b * static_cast<size_t>(seq) + t] = 1;
    }
    if (all_labeled) batch.labels.push_back(static_cast<int32_t>(*d.label));
  }
  return batch;
}

}  // namespace ulma
