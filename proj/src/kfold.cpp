// SPDX-License-Identifier: Apache-2.0
#include "ulma/kfold.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "ulma/errors.hpp"
#include "ulma/rng.hpp"

namespace ulma {

std::vector<FoldSplit> stratified_kfold(const std::vector<int>& labels, int k, uint64_t seed) {
  if (k < 2) throw UsageError("kfold: k must be >= 2");
  if (labels.empty()) throw DataError("kfold: no labeled documents");

  std::map<int, std::vector<int>> by_class;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) throw DataError("kfold: negative class label");
    by_class[labels[i]].push_back(static_cast<int>(i));
  }

  std::vector<std::vector<int>> fold_members(static_cast<size_t>(k));
  for (auto& [cls, members] : by_class) {
    if (static_cast<int>(members.size()) < k) {
      throw DataError("kfold: class " + std::to_string(cls) + " has only " +
                      std::to_string(members.size()) + " documents for k=" + std::to_string(k));
    }
    Rng rng(substream(seed, Stream::kFold, static_cast<uint64_t>(cls)));
    rng.shuffle(members);
    for (size_t i = 0; i < members.size(); ++i) {
      fold_members[i % static_cast<size_t>(k)].push_back(members[i]);
    }
  }

  std::vector<FoldSplit> folds(static_cast<size_t>(k));
  for (int f = 0; f < k; ++f) {
    FoldSplit& split = folds[static_cast<size_t>(f)];
    split.val_indices = fold_members[static_cast<size_t>(f)];
    std::sort(split.val_indices.begin(), split.val_indices.end());
    for (int g = 0; g < k; ++g) {
      if (g == f) continue;
      split.train_indices.insert(split.train_indices.end(),
                                 fold_members[static_cast<size_t>(g)].begin(),
                                 fold_members[static_cast<size_t>(g)].end());
    }
    std::sort(split.train_indices.begin(), split.train_indices.end());
  }
  return folds;
}

}  // namespace ulma
