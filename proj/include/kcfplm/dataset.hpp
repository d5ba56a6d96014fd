#pragma once

#include "kcfplm/aspects.hpp"
#include "kcfplm/corpus.hpp"
#include "kcfplm/kgraph.hpp"
#include "kcfplm/textenc.hpp"

#include <array>
#include <memory>
#include <optional>
#include <unordered_map>
#include <vector>

namespace kcf::data {

using corpus::ReviewId;

// Everything the model sees for one user-item pair.
struct Example {
  std::optional<ReviewId> review;  // target review, absent for ad-hoc pairs
  int user = 0;
  int item = 0;
  double rating = 0.0;
  std::vector<int> user_doc;
  std::vector<int> item_doc;
  aspects::AspectBag bag;
  // Train reviews that fed the documents or the aspect bag.
  std::vector<ReviewId> sources;
  // User or item has no training reviews at all.
  bool cold = false;
};

struct PrepareOptions {
  std::size_t max_doc_tokens = 300;
  std::size_t max_aspects = 64;
};

// Prepared corpus state: splits, extracted aspects, graph and token ids.
// Examples never draw on their own target review or on non-train reviews.
class Dataset {
 public:
  Dataset(corpus::ReviewCorpus corpus, corpus::SplitSet splits, aspects::AspectVocabulary aspect_vocab,
          std::vector<aspects::AspectMention> mentions, kg::KnowledgeGraph graph, text::Vocabulary vocab,
          text::TokenizerKind tokenizer, PrepareOptions opts);
  // Internal indexes point back into this object.
  Dataset(const Dataset&) = delete;
  Dataset& operator=(const Dataset&) = delete;

  const corpus::ReviewCorpus& corpus() const { return corpus_; }
  const corpus::SplitSet& splits() const { return splits_; }
  const aspects::AspectVocabulary& aspect_vocab() const { return aspect_vocab_; }
  const std::vector<aspects::AspectMention>& mentions() const { return mentions_; }
  const kg::KnowledgeGraph& graph() const { return graph_; }
  const text::Vocabulary& vocab() const { return vocab_; }
  const PrepareOptions& options() const { return opts_; }
  std::span<const int> tokens(ReviewId id) const;

  const std::vector<Example>& examples(corpus::SplitName split) const;
  Example make_example(int user, int item, std::optional<ReviewId> exclude, double rating = 0.0) const;

 private:
  corpus::ReviewCorpus corpus_;
  corpus::SplitSet splits_;
  aspects::AspectVocabulary aspect_vocab_;
  std::vector<aspects::AspectMention> mentions_;
  kg::KnowledgeGraph graph_;
  text::Vocabulary vocab_;
  PrepareOptions opts_;
  std::unordered_map<ReviewId, std::vector<int>> tokens_;
  std::unique_ptr<corpus::DocumentBuilder> documents_;
  std::unique_ptr<aspects::MentionIndex> index_;
  std::array<std::vector<Example>, 3> examples_;
};

}  // namespace kcf::data
