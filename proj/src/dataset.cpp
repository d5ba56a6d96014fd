#include "kcfplm/dataset.hpp"

#include "kcfplm/error.hpp"

#include <algorithm>
#include <set>

namespace kcf::data {

Dataset::Dataset(corpus::ReviewCorpus corpus, corpus::SplitSet splits, aspects::AspectVocabulary aspect_vocab,
                 std::vector<aspects::AspectMention> mentions, kg::KnowledgeGraph graph, text::Vocabulary vocab,
                 text::TokenizerKind tokenizer_kind, PrepareOptions opts)
    : corpus_(std::move(corpus)),
      splits_(std::move(splits)),
      aspect_vocab_(std::move(aspect_vocab)),
      mentions_(std::move(mentions)),
      graph_(std::move(graph)),
      vocab_(std::move(vocab)),
      opts_(opts) {
  corpus_.reindex();
  const auto tokenizer = text::make_tokenizer(tokenizer_kind, vocab_);
  for (auto& r : corpus_.reviews) {
    auto ids = tokenizer->encode(r.text);
    r.token_count = static_cast<int>(ids.size());
    tokens_.emplace(r.id, std::move(ids));
  }
  documents_ = std::make_unique<corpus::DocumentBuilder>(
      corpus_, splits_.train, [this](const corpus::Review& r) { return tokens(r.id); });
  index_ = std::make_unique<aspects::MentionIndex>(corpus_, splits_.train, mentions_);
  for (auto s : {corpus::SplitName::train, corpus::SplitName::validation, corpus::SplitName::test}) {
    auto& out = examples_[static_cast<std::size_t>(s)];
    for (ReviewId id : splits_.get(s)) {
      const auto& r = corpus_.review(id);
      out.push_back(make_example(r.user, r.item, id, r.rating));
    }
  }
}

std::span<const int> Dataset::tokens(ReviewId id) const {
  auto it = tokens_.find(id);
  require(it != tokens_.end(), "no tokens for review " + std::to_string(id));
  return it->second;
}

const std::vector<Example>& Dataset::examples(corpus::SplitName split) const {
  return examples_[static_cast<std::size_t>(split)];
}

Example Dataset::make_example(int user, int item, std::optional<ReviewId> exclude, double rating) const {
  require(user >= 0 && user < corpus_.users.size() && item >= 0 && item < corpus_.items.size(),
          "example user or item out of range");
  Example ex;
  ex.review = exclude;
  ex.user = user;
  ex.item = item;
  ex.rating = rating;
  const auto udoc = documents_->build(user, corpus::Side::user, exclude, opts_.max_doc_tokens);
  const auto idoc = documents_->build(item, corpus::Side::item, exclude, opts_.max_doc_tokens);
  ex.user_doc = udoc.tokens;
  ex.item_doc = idoc.tokens;
  ex.bag = index_->collect(user, item, exclude, opts_.max_aspects);
  ex.cold = documents_->reviews_of(user, corpus::Side::user).empty() ||
            documents_->reviews_of(item, corpus::Side::item).empty();

  std::set<ReviewId> sources;
  for (const auto& span : udoc.provenance) sources.insert(span.review);
  for (const auto& span : idoc.provenance) sources.insert(span.review);
  std::set<int> in_bag;
  for (const auto& b : ex.bag.items) in_bag.insert(b.aspect);
  for (const auto* list : {&index_->of_user(user), &index_->of_item(item)})
    for (const auto& e : *list)
      if ((!exclude || e.review != *exclude) && in_bag.count(e.aspect)) sources.insert(e.review);
  ex.sources.assign(sources.begin(), sources.end());
  return ex;
}

}  // namespace kcf::data
