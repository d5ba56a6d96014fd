#pragma once

#include "kcfplm/config.hpp"
#include "kcfplm/corpus.hpp"

#include <string>
#include <vector>

namespace kcf::synthetic {

// Corpus whose ratings combine latent user/item factors with a bonus when a
// user's preferred aspect is one of the item's aspects. Review text mentions
// aspects with sentiment words so the regular extraction pipeline recovers
// them.
struct SyntheticData {
  corpus::ReviewCorpus corpus;
  std::vector<std::string> aspect_terms;
  std::vector<std::string> positive;
  std::vector<std::string> negative;
  std::vector<std::pair<std::string, std::vector<double>>> word_vectors;
  std::vector<std::vector<int>> preferred;     // per user, aspect indices
  std::vector<std::vector<int>> item_aspects;  // per item
  std::vector<double> planted_bonus;           // per review, in corpus order
};

SyntheticData generate(const config::SyntheticConfig& cfg, int rating_max = 5);

// Writes reviews.jsonl, aspect_terms.txt, positive.txt, negative.txt and
// vectors.txt into dir.
void write(const SyntheticData& data, const std::string& dir);

}  // namespace kcf::synthetic
