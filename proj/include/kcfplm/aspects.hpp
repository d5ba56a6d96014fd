#pragma once

#include "kcfplm/corpus.hpp"

#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kcf::aspects {

using corpus::ReviewId;

enum class Polarity { positive, negative, neutral };
enum class Source { user = 0, item = 1, both = 2 };

std::string to_string(Polarity p);
Polarity polarity_from_string(const std::string& s);
std::string to_string(Source s);

struct AspectMention {
  ReviewId review = 0;
  int aspect = 0;
  Polarity polarity = Polarity::neutral;

  friend bool operator==(const AspectMention&, const AspectMention&) = default;
};

// Lowercased, trimmed, whitespace-collapsed form of an aspect term.
std::string canonical_term(std::string_view raw);

class AspectVocabulary {
 public:
  // Adds the canonical form of raw if new; returns its id either way.
  // Empty terms are ignored and yield -1.
  int add(std::string_view raw);
  std::optional<int> find(std::string_view raw) const;
  const std::string& term(int id) const { return entries_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& entries() const { return entries_; }
  int size() const { return static_cast<int>(entries_.size()); }

 private:
  std::vector<std::string> entries_;
  std::unordered_map<std::string, int> index_;
};

AspectVocabulary canonicalize(std::span<const std::string> raw_terms);

// Lowercase runs of letters, digits and apostrophes.
std::vector<std::string> word_tokens(std::string_view text);

class AspectExtractor {
 public:
  virtual ~AspectExtractor() = default;
  virtual std::vector<AspectMention> extract(const corpus::Review& review) const = 0;
};

// Lexicon matcher: aspect terms (possibly multi-word, longest match wins)
// take the polarity of the nearest sentiment word within `window` tokens;
// equidistant words of opposite polarity, or none in range, give NEUTRAL.
class LexiconExtractor : public AspectExtractor {
 public:
  LexiconExtractor(const AspectVocabulary& vocab, std::set<std::string> positive, std::set<std::string> negative,
                   int window = 5);
  std::vector<AspectMention> extract(const corpus::Review& review) const override;

 private:
  std::unordered_map<std::string, int> phrases_;  // canonical term -> aspect id
  std::size_t longest_ = 1;
  std::set<std::string> positive_;
  std::set<std::string> negative_;
  int window_;
};

std::vector<AspectMention> extract_mentions(const corpus::Review& review, const AspectExtractor& extractor);

// One term per line; blank lines and '#' comments skipped.
std::vector<std::string> read_lexicon(std::istream& in);
std::vector<std::string> read_lexicon_file(const std::string& path);

// review_id \t aspect \t polarity
void write_mentions(std::ostream& out, std::span<const AspectMention> mentions, const AspectVocabulary& vocab);
std::vector<AspectMention> read_mentions(std::istream& in, const AspectVocabulary& vocab);

struct BagItem {
  int aspect = 0;
  Source source = Source::user;
  int num = 0;  // user_count + item_count
  int user_count = 0;
  int item_count = 0;
};

struct AspectBag {
  int user = 0;
  int item = 0;
  std::vector<BagItem> items;  // descending num, then aspect id
  int untruncated_size = 0;
};

// Train-split mentions grouped by the reviewing user and the reviewed item.
class MentionIndex {
 public:
  MentionIndex(const corpus::ReviewCorpus& corpus, const std::vector<ReviewId>& train,
               std::span<const AspectMention> mentions);

  // Aspects from u's and i's train reviews, skipping `exclude`; truncated to
  // max_aspects by descending count then aspect id.
  AspectBag collect(int user, int item, std::optional<ReviewId> exclude, std::size_t max_aspects) const;

  struct Entry {
    ReviewId review;
    int aspect;
    Polarity polarity;
  };
  const std::vector<Entry>& of_user(int user) const { return by_user_.at(static_cast<std::size_t>(user)); }
  const std::vector<Entry>& of_item(int item) const { return by_item_.at(static_cast<std::size_t>(item)); }

 private:
  std::vector<std::vector<Entry>> by_user_;
  std::vector<std::vector<Entry>> by_item_;
};

AspectBag collect_pair_aspects(int user, int item, const MentionIndex& index, std::optional<ReviewId> exclude,
                               std::size_t max_aspects = 64);

class SimilarityProvider {
 public:
  virtual ~SimilarityProvider() = default;
  // Cosine similarity in [-1, 1]; nullopt if either term is unknown.
  virtual std::optional<double> similarity(const std::string& a, const std::string& b) const = 0;
};

// Word vectors from "term v1 v2 ...". Multi-word terms missing from the file
// fall back to the mean of their word vectors when every word is present.
class VectorSimilarity : public SimilarityProvider {
 public:
  static VectorSimilarity read(std::istream& in);
  static VectorSimilarity read_file(const std::string& path);
  void add(const std::string& term, std::vector<double> vec);
  std::optional<double> similarity(const std::string& a, const std::string& b) const override;
  std::size_t size() const { return vectors_.size(); }

 private:
  std::optional<std::vector<double>> lookup(const std::string& term) const;
  std::unordered_map<std::string, std::vector<double>> vectors_;
  std::size_t dim_ = 0;
};

struct SynonymResult {
  std::vector<std::pair<int, int>> pairs;  // a < b
  std::size_t skipped_missing = 0;
};

SynonymResult synonym_pairs(const AspectVocabulary& vocab, const SimilarityProvider& sim, double threshold = 0.8);

}  // namespace kcf::aspects
