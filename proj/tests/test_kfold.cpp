// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <set>
#include <vector>

#include "doctest.h"
#include "ulma/errors.hpp"
#include "ulma/kfold.hpp"
#include "ulma/rng.hpp"

using ulma::FoldSplit;
using ulma::stratified_kfold;

namespace {

// The reference corpus class balance: 709 / 1022 / 18614.
std::vector<int> imbalanced_labels() {
  std::vector<int> labels;
  labels.insert(labels.end(), 709, 2);
  labels.insert(labels.end(), 1022, 1);
  labels.insert(labels.end(), 18614, 0);
  ulma::Rng rng(3);
  rng.shuffle(labels);
  return labels;
}

std::vector<int> class_counts(const std::vector<int>& labels, const std::vector<int>& idx,
                              int K) {
  std::vector<int> counts(static_cast<size_t>(K), 0);
  for (int i : idx) ++counts[static_cast<size_t>(labels[static_cast<size_t>(i)])];
  return counts;
}

}  // namespace

TEST_CASE("ten folds of the imbalanced corpus stay within one of the quotient") {
  const auto labels = imbalanced_labels();
  const auto folds = stratified_kfold(labels, 10, 17);
  REQUIRE(folds.size() == 10);
  // Exact per-class quotients: 709/10 = 70.9, 1022/10 = 102.2, 18614/10 = 1861.4.
  const double quotient[3] = {1861.4, 102.2, 70.9};
  int totals[3] = {0, 0, 0};
  for (const auto& fold : folds) {
    const auto counts = class_counts(labels, fold.val_indices, 3);
    for (int k = 0; k < 3; ++k) {
      CHECK(std::abs(counts[static_cast<size_t>(k)] - quotient[k]) <= 1.0);
      totals[k] += counts[static_cast<size_t>(k)];
    }
  }
  CHECK(totals[0] == 18614);
  CHECK(totals[1] == 1022);
  CHECK(totals[2] == 709);
}

TEST_CASE("validation folds partition the index set") {
  const auto labels = imbalanced_labels();
  const auto folds = stratified_kfold(labels, 10, 17);
  std::set<int> seen;
  size_t total = 0;
  for (const auto& fold : folds) {
    for (int i : fold.val_indices) {
      CHECK(seen.insert(i).second);  // no index in two validation folds
    }
    total += fold.val_indices.size();
    // train ∪ val covers everything, disjointly, for each fold
    CHECK(fold.train_indices.size() + fold.val_indices.size() == labels.size());
    std::set<int> train(fold.train_indices.begin(), fold.train_indices.end());
    for (int i : fold.val_indices) CHECK(train.count(i) == 0);
  }
  CHECK(total == labels.size());
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == static_cast<int>(labels.size()) - 1);
}

TEST_CASE("splits are deterministic in the seed and sensitive to it") {
  const std::vector<int> labels = {0, 0, 0, 1, 1, 1, 0, 1, 0, 1, 0, 0};
  const auto a = stratified_kfold(labels, 3, 5);
  const auto b = stratified_kfold(labels, 3, 5);
  const auto c = stratified_kfold(labels, 3, 6);
  REQUIRE(a.size() == b.size());
  bool differs = false;
  for (size_t f = 0; f < a.size(); ++f) {
    CHECK(a[f].val_indices == b[f].val_indices);
    CHECK(a[f].train_indices == b[f].train_indices);
    differs = differs || a[f].val_indices != c[f].val_indices;
  }
  CHECK(differs);
}

TEST_CASE("index lists come out sorted for stable batching downstream") {
  const auto labels = imbalanced_labels();
  const auto folds = stratified_kfold(labels, 4, 9);
  for (const auto& fold : folds) {
    CHECK(std::is_sorted(fold.val_indices.begin(), fold.val_indices.end()));
    CHECK(std::is_sorted(fold.train_indices.begin(), fold.train_indices.end()));
  }
}

TEST_CASE("small classes and bad parameters are rejected") {
  CHECK_THROWS_AS(stratified_kfold({0, 0, 0, 1}, 2, 1), ulma::DataError);  // class 1 < k
  CHECK_THROWS_AS(stratified_kfold({}, 2, 1), ulma::DataError);
  CHECK_THROWS_AS(stratified_kfold({0, 0}, 1, 1), ulma::UsageError);
  CHECK_THROWS_AS(stratified_kfold({0, -1}, 2, 1), ulma::DataError);
}
