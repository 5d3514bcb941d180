// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

namespace ulma {

struct FoldSplit {
  std::vector<int> train_indices;
  std::vector<int> val_indices;
};

// Stratified k-fold: each class's members are shuffled under a per-class
// substream of `seed` and dealt round-robin across folds, so per-fold class
// counts differ by at most one. Every class present must have at least k
// members. Index lists come out sorted.
std::vector<FoldSplit> stratified_kfold(const std::vector<int>& labels, int k, uint64_t seed);

}  // namespace ulma
