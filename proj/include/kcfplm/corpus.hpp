#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace kcf::corpus {

using ReviewId = std::uint32_t;

enum class Side { user, item };

// Dense index <-> external label table for users or items.
class Interner {
 public:
  int intern(const std::string& label);
  std::optional<int> find(const std::string& label) const;
  const std::string& label(int index) const { return labels_.at(static_cast<std::size_t>(index)); }
  int size() const { return static_cast<int>(labels_.size()); }
  const std::vector<std::string>& labels() const { return labels_; }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, int> index_;
};

struct Review {
  ReviewId id = 0;
  int user = 0;
  int item = 0;
  int rating = 0;
  std::string text;
  std::optional<std::int64_t> timestamp;
  int token_count = 0;
};

struct ReviewCorpus {
  int rating_max = 5;
  std::vector<Review> reviews;
  Interner users;
  Interner items;
  // item label -> labels of items bought alongside it
  std::map<std::string, std::vector<std::string>> also_buy;

  // Rebuilds the review id lookup; call after mutating `reviews`.
  void reindex();
  const Review& review(ReviewId id) const;
  bool contains(ReviewId id) const { return by_id_.count(id) != 0; }

 private:
  std::unordered_map<ReviewId, std::size_t> by_id_;
};

struct ParseStats {
  std::size_t lines = 0;
  std::size_t accepted = 0;
  std::size_t metadata = 0;
  std::size_t skipped = 0;
  std::vector<std::string> diagnostics;  // first few rejection reasons, with line numbers
};

struct ParseResult {
  ReviewCorpus corpus;
  ParseStats stats;
};

// Line-delimited JSON records. Review lines carry user_id, item_id, rating,
// text and optionally timestamp and review_id; item-metadata lines carry
// item_id and also_buy. Malformed lines are counted and skipped.
ParseResult parse_reviews(std::istream& in, int rating_max = 5);
ParseResult parse_reviews_file(const std::string& path, int rating_max = 5);
void write_reviews(std::ostream& out, const ReviewCorpus& corpus);

// Collapses whitespace runs to one space and trims the ends.
std::string normalize_whitespace(std::string_view text);

// Iteratively drops users and items with fewer than min_reviews reviews
// until nothing changes. Throws ErrorKind::empty_corpus if nothing survives.
ReviewCorpus filter_k_core(const ReviewCorpus& corpus, int min_reviews);

enum class SplitName { train, validation, test };
std::string to_string(SplitName s);
SplitName split_from_string(const std::string& s);

struct SplitSet {
  std::vector<ReviewId> train;
  std::vector<ReviewId> validation;
  std::vector<ReviewId> test;

  const std::vector<ReviewId>& get(SplitName s) const;
};

struct SplitRatios {
  double train = 8;
  double validation = 1;
  double test = 1;
};

SplitSet split_corpus(const ReviewCorpus& corpus, SplitRatios ratios, std::uint64_t seed,
                      bool stratify_by_user = false);

// user_id \t item_id \t review_id \t split, one line per review.
void write_split_manifest(std::ostream& out, const ReviewCorpus& corpus, const SplitSet& splits);
SplitSet read_split_manifest(std::istream& in, const ReviewCorpus& corpus);

struct TokenSpan {
  ReviewId review = 0;
  std::uint32_t begin = 0;
  std::uint32_t end = 0;
};

struct Document {
  int entity = 0;
  Side side = Side::user;
  std::vector<int> tokens;
  std::vector<TokenSpan> provenance;

  bool empty() const { return tokens.empty(); }
};

using TokenLookup = std::function<std::span<const int>(const Review&)>;

// Per-entity train review lists in document order: timestamp ascending when
// present, then review id.
class DocumentBuilder {
 public:
  DocumentBuilder(const ReviewCorpus& corpus, const std::vector<ReviewId>& train, TokenLookup tokens);

  Document build(int entity, Side side, std::optional<ReviewId> exclude, std::size_t max_tokens) const;
  const std::vector<ReviewId>& reviews_of(int entity, Side side) const;

 private:
  const ReviewCorpus* corpus_;
  TokenLookup tokens_;
  std::vector<std::vector<ReviewId>> by_user_;
  std::vector<std::vector<ReviewId>> by_item_;
};

Document build_document(const ReviewCorpus& corpus, const SplitSet& splits, int entity, Side side,
                        std::optional<ReviewId> exclude, std::size_t max_tokens, const TokenLookup& tokens);

}  // namespace kcf::corpus
