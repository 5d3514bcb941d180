// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "ulma/dataset.hpp"
#include "ulma/errors.hpp"
#include "ulma/text.hpp"
#include "ulma/tokenizer.hpp"

using ulma::Batch;
using ulma::EncodedDoc;
using ulma::Label;
using ulma::RawDocument;
using ulma::TsvStats;
using ulma::Vocabulary;

TEST_CASE("tsv reader splits on the first tab and counts line kinds") {
  std::istringstream in(
      "# a comment\n"
      "CLEAN\thello world\n"
      "\n"
      "OFFENSIVE\ttabs\tstay in text\n"
      "no tab on this line\n"
      "-\tunlabeled row\n"
      "HATE\tlast\n");
  TsvStats stats;
  std::ostringstream warn;
  const auto docs = ulma::read_tsv_stream(in, "mem", &stats, &warn);
  REQUIRE(docs.size() == 4);
  CHECK(docs[0].text == "hello world");
  CHECK(docs[0].label == Label::kClean);
  CHECK(docs[1].text == "tabs\tstay in text");
  CHECK(docs[1].label == Label::kOffensive);
  CHECK(!docs[2].label.has_value());
  CHECK(docs[3].label == Label::kHate);
  CHECK(stats.lines == 7);
  CHECK(stats.comments == 1);
  CHECK(stats.blanks == 1);
  CHECK(stats.malformed == 1);
  CHECK(stats.docs == 4);
  CHECK(warn.str().find("mem:5") != std::string::npos);
}

TEST_CASE("tsv reader strips carriage returns and flags bad labels by line") {
  std::istringstream ok("CLEAN\twindows line\r\n");
  const auto docs = ulma::read_tsv_stream(ok, "mem");
  REQUIRE(docs.size() == 1);
  CHECK(docs[0].text == "windows line");

  std::istringstream bad("CLEAN\tfine\nWRONG\toops\n");
  try {
    ulma::read_tsv_stream(bad, "mem");
    FAIL("expected a data error");
  } catch (const ulma::DataError& e) {
    CHECK(std::string(e.what()).find("mem:2") != std::string::npos);
  }
}

TEST_CASE("tsv writer round-trips and sanitizes embedded breaks") {
  std::vector<RawDocument> docs;
  docs.push_back({"plain text", Label::kClean});
  docs.push_back({"tab\there newline\nthere", Label::kHate});
  docs.push_back({"unlabeled", std::nullopt});
  const std::string path = "./dataset_rt.tsv";
  ulma::write_tsv(path, docs);
  const auto back = ulma::read_tsv(path);
  REQUIRE(back.size() == 3);
  CHECK(back[0].text == "plain text");
  CHECK(back[1].text == "tab here newline there");
  CHECK(back[1].label == Label::kHate);
  CHECK(!back[2].label.has_value());
  std::remove(path.c_str());
}

TEST_CASE("missing files raise data errors") {
  CHECK_THROWS_AS(ulma::read_tsv("./no_such_file.tsv"), ulma::DataError);
}

TEST_CASE("batches pad to the longest selected row and carry labels") {
  const Vocabulary vocab = ulma::build_vocab({{"aa", "ab", "bb"}}, 40);
  std::vector<EncodedDoc> docs;
  docs.push_back(ulma::encode_document(vocab, {"aa ab", Label::kClean}, 16));
  docs.push_back(ulma::encode_document(vocab, {"bb", Label::kHate}, 16));
  docs.push_back(ulma::encode_document(vocab, {"aa aa aa", Label::kOffensive}, 16));
  REQUIRE(docs[0].ids.size() > docs[1].ids.size());

  const Batch batch = ulma::make_batch(docs, {0, 1}, Vocabulary::kPad);
  CHECK(batch.batch == 2);
  CHECK(batch.seq == static_cast<int>(docs[0].ids.size()));
  CHECK(batch.labels == std::vector<int32_t>{0, 2});
  for (int t = 0; t < batch.seq; ++t) {
    CHECK(batch.id(0, t) == docs[0].ids[static_cast<size_t>(t)]);
    CHECK(batch.live(0, t));
  }
  const int live1 = static_cast<int>(docs[1].ids.size());
  for (int t = 0; t < batch.seq; ++t) {
    if (t < live1) {
      CHECK(batch.id(1, t) == docs[1].ids[static_cast<size_t>(t)]);
      CHECK(batch.live(1, t));
    } else {
      CHECK(batch.id(1, t) == Vocabulary::kPad);
      CHECK(!batch.live(1, t));
    }
  }
}

TEST_CASE("batches omit labels when any selected row lacks one") {
  const Vocabulary vocab = ulma::build_vocab({{"aa", "bb"}}, 40);
  std::vector<EncodedDoc> docs;
  docs.push_back(ulma::encode_document(vocab, {"aa", Label::kClean}, 16));
  docs.push_back(ulma::encode_document(vocab, {"bb", std::nullopt}, 16));
  const Batch batch = ulma::make_batch(docs, {0, 1}, Vocabulary::kPad);
  CHECK(batch.labels.empty());
  const Batch labeled = ulma::make_batch(docs, {0}, Vocabulary::kPad);
  CHECK(labeled.labels == std::vector<int32_t>{0});
}

TEST_CASE("batch selection validates its indices") {
  const Vocabulary vocab = ulma::build_vocab({{"aa"}}, 40);
  std::vector<EncodedDoc> docs;
  docs.push_back(ulma::encode_document(vocab, {"aa", Label::kClean}, 16));
  CHECK_THROWS_AS(ulma::make_batch(docs, {1}, Vocabulary::kPad), ulma::DataError);
  CHECK_THROWS_AS(ulma::make_batch(docs, {}, Vocabulary::kPad), ulma::DataError);
}

TEST_CASE("encoding a corpus preserves order, labels, and the length cap") {
  const Vocabulary vocab = ulma::build_vocab({{"aa", "ab", "bb"}}, 40);
  std::vector<RawDocument> docs;
  docs.push_back({"aa ab", Label::kOffensive});
  std::string long_text;
  for (int i = 0; i < 100; ++i) long_text += "aa ";
  docs.push_back({long_text, std::nullopt});
  const auto enc = ulma::encode_corpus(vocab, docs, 12);
  REQUIRE(enc.size() == 2);
  CHECK(enc[0].label == Label::kOffensive);
  CHECK(enc[0].ids.front() == Vocabulary::kBos);
  CHECK(enc[0].ids.back() == Vocabulary::kEos);
  CHECK(enc[1].ids.size() == 12);
  CHECK(enc[1].ids.back() == Vocabulary::kEos);
}
