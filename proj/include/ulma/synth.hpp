// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "ulma/text.hpp"

namespace ulma {

// Sizes default to roughly one quarter of the reference corpus, keeping its
// class ratio (HATE : OFFENSIVE : CLEAN is about 3.5% : 5% : 91.5%).
struct SynthSpec {
  int num_hate = 177;
  int num_offensive = 255;
  int num_clean = 4654;
  uint64_t seed = 42;
};

// Deterministic labeled corpus of invented-word documents. Class identity is
// carried by disjoint marker-token pools mixed into shared filler, with
// sporadic emoji, raw phone numbers, email addresses and uppercase noise so
// the cleaning pipeline has real work to do. No natural-language slurs are
// used; the offensive and hateful markers are nonsense coinages.
std::vector<RawDocument> generate_synthetic(const SynthSpec& spec);

}  // namespace ulma
