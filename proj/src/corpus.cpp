#include "kcfplm/corpus.hpp"

#include "kcfplm/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

namespace kcf::corpus {

namespace {

constexpr std::size_t kMaxDiagnostics = 20;

void note(ParseStats& stats, std::size_t line, const std::string& why) {
  ++stats.skipped;
  if (stats.diagnostics.size() < kMaxDiagnostics)
    stats.diagnostics.push_back("line " + std::to_string(line) + ": " + why);
}

// Ids in the input may be strings or numbers; both become labels.
std::optional<std::string> label_field(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
  return std::nullopt;
}

int count_words(std::string_view text) {
  int n = 0;
  bool in_word = false;
  for (char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

}  // namespace

int Interner::intern(const std::string& label) {
  auto [it, inserted] = index_.try_emplace(label, static_cast<int>(labels_.size()));
  if (inserted) labels_.push_back(label);
  return it->second;
}

std::optional<int> Interner::find(const std::string& label) const {
  auto it = index_.find(label);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void ReviewCorpus::reindex() {
  by_id_.clear();
  for (std::size_t i = 0; i < reviews.size(); ++i) by_id_[reviews[i].id] = i;
}

const Review& ReviewCorpus::review(ReviewId id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) fail(ErrorKind::input, "unknown review id " + std::to_string(id));
  return reviews[it->second];
}

std::string normalize_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

ParseResult parse_reviews(std::istream& in, int rating_max) {
  if (!in) fail(ErrorKind::input, "review stream is not readable");
  ParseResult result;
  ReviewCorpus& corpus = result.corpus;
  ParseStats& stats = result.stats;
  corpus.rating_max = rating_max;
  std::set<ReviewId> seen_ids;
  ReviewId next_ordinal = 0;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++stats.lines;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      note(stats, line_no, "not a JSON object");
      continue;
    }
    const auto item = label_field(j, "item_id");
    if (!item) {
      note(stats, line_no, "missing item_id");
      continue;
    }
    if (!j.contains("user_id") && j.contains("also_buy")) {
      if (!j["also_buy"].is_array()) {
        note(stats, line_no, "also_buy is not a list");
        continue;
      }
      auto& dst = corpus.also_buy[*item];
      for (const auto& other : j["also_buy"])
        if (other.is_string()) dst.push_back(other.get<std::string>());
      ++stats.metadata;
      continue;
    }
    const auto user = label_field(j, "user_id");
    if (!user) {
      note(stats, line_no, "missing user_id");
      continue;
    }
    if (!j.contains("rating") || !j["rating"].is_number()) {
      note(stats, line_no, "missing or non-numeric rating");
      continue;
    }
    const double raw_rating = j["rating"].get<double>();
    if (raw_rating != std::floor(raw_rating) || raw_rating < 1 || raw_rating > rating_max) {
      note(stats, line_no, "rating outside [1, " + std::to_string(rating_max) + "]");
      continue;
    }
    if (!j.contains("text") || !j["text"].is_string()) {
      note(stats, line_no, "missing text");
      continue;
    }
    std::optional<std::int64_t> timestamp;
    if (j.contains("timestamp")) {
      if (!j["timestamp"].is_number_integer()) {
        note(stats, line_no, "timestamp is not an integer");
        continue;
      }
      timestamp = j["timestamp"].get<std::int64_t>();
    }
    ReviewId id = next_ordinal;
    if (j.contains("review_id")) {
      if (!j["review_id"].is_number_unsigned()) {
        note(stats, line_no, "review_id is not a nonnegative integer");
        continue;
      }
      id = j["review_id"].get<ReviewId>();
    }
    if (!seen_ids.insert(id).second) {
      note(stats, line_no, "duplicate review_id " + std::to_string(id));
      continue;
    }
    next_ordinal = std::max(next_ordinal, id + 1);

    Review r;
    r.id = id;
    r.user = corpus.users.intern(*user);
    r.item = corpus.items.intern(*item);
    r.rating = static_cast<int>(raw_rating);
    r.text = normalize_whitespace(j["text"].get<std::string>());
    r.timestamp = timestamp;
    r.token_count = count_words(r.text);
    corpus.reviews.push_back(std::move(r));
    ++stats.accepted;
  }
  if (in.bad()) fail(ErrorKind::input, "error while reading review stream");
  corpus.reindex();
  return result;
}

ParseResult parse_reviews_file(const std::string& path, int rating_max) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::input, "cannot open review file: " + path);
  return parse_reviews(in, rating_max);
}

void write_reviews(std::ostream& out, const ReviewCorpus& corpus) {
  for (const Review& r : corpus.reviews) {
    nlohmann::json j{{"review_id", r.id},
                     {"user_id", corpus.users.label(r.user)},
                     {"item_id", corpus.items.label(r.item)},
                     {"rating", r.rating},
                     {"text", r.text}};
    if (r.timestamp) j["timestamp"] = *r.timestamp;
    out << j.dump() << '\n';
  }
  for (const auto& [item, others] : corpus.also_buy)
    out << nlohmann::json{{"item_id", item}, {"also_buy", others}}.dump() << '\n';
}

ReviewCorpus filter_k_core(const ReviewCorpus& corpus, int min_reviews) {
  require(min_reviews >= 1, "filter_k_core: min_reviews must be >= 1");
  std::vector<char> alive(corpus.reviews.size(), 1);
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<int> user_count(static_cast<std::size_t>(corpus.users.size()), 0);
    std::vector<int> item_count(static_cast<std::size_t>(corpus.items.size()), 0);
    for (std::size_t i = 0; i < corpus.reviews.size(); ++i) {
      if (!alive[i]) continue;
      ++user_count[static_cast<std::size_t>(corpus.reviews[i].user)];
      ++item_count[static_cast<std::size_t>(corpus.reviews[i].item)];
    }
    for (std::size_t i = 0; i < corpus.reviews.size(); ++i) {
      if (!alive[i]) continue;
      const Review& r = corpus.reviews[i];
      if (user_count[static_cast<std::size_t>(r.user)] < min_reviews ||
          item_count[static_cast<std::size_t>(r.item)] < min_reviews) {
        alive[i] = 0;
        changed = true;
      }
    }
  }

  ReviewCorpus out;
  out.rating_max = corpus.rating_max;
  for (std::size_t i = 0; i < corpus.reviews.size(); ++i) {
    if (!alive[i]) continue;
    Review r = corpus.reviews[i];
    r.user = out.users.intern(corpus.users.label(r.user));
    r.item = out.items.intern(corpus.items.label(r.item));
    out.reviews.push_back(std::move(r));
  }
  if (out.reviews.empty())
    fail(ErrorKind::empty_corpus, "k-core filtering with min_reviews=" + std::to_string(min_reviews) +
                                      " removed every review");
  for (const auto& [item, others] : corpus.also_buy)
    if (out.items.find(item)) out.also_buy[item] = others;
  out.reindex();
  return out;
}

std::string to_string(SplitName s) {
  switch (s) {
    case SplitName::train: return "train";
    case SplitName::validation: return "validation";
    case SplitName::test: return "test";
  }
  return "train";
}

SplitName split_from_string(const std::string& s) {
  if (s == "train") return SplitName::train;
  if (s == "validation" || s == "valid" || s == "val") return SplitName::validation;
  if (s == "test") return SplitName::test;
  fail(ErrorKind::config, "unknown split name: " + s);
}

const std::vector<ReviewId>& SplitSet::get(SplitName s) const {
  switch (s) {
    case SplitName::train: return train;
    case SplitName::validation: return validation;
    case SplitName::test: return test;
  }
  return train;
}

namespace {

// Sizes for n items under the ratios; held-out parts are rounded, train takes
// the remainder so the partition is exact.
std::array<std::size_t, 3> split_sizes(std::size_t n, SplitRatios r) {
  const double total = r.train + r.validation + r.test;
  const auto val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * r.validation / total));
  const auto test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * r.test / total));
  return {n - std::min(n, val + test), val, test};
}

}  // namespace

SplitSet split_corpus(const ReviewCorpus& corpus, SplitRatios ratios, std::uint64_t seed, bool stratify_by_user) {
  if (ratios.train <= 0 || ratios.validation <= 0 || ratios.test <= 0)
    fail(ErrorKind::config, "split ratios must be positive");
  if (corpus.reviews.empty()) fail(ErrorKind::config, "cannot split an empty corpus");

  std::mt19937_64 rng(seed);
  SplitSet out;
  auto assign = [&](std::vector<ReviewId>& ids) {
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto sizes = split_sizes(ids.size(), ratios);
    out.train.insert(out.train.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(sizes[0]));
    out.validation.insert(out.validation.end(), ids.begin() + static_cast<std::ptrdiff_t>(sizes[0]),
                          ids.begin() + static_cast<std::ptrdiff_t>(sizes[0] + sizes[1]));
    out.test.insert(out.test.end(), ids.begin() + static_cast<std::ptrdiff_t>(sizes[0] + sizes[1]), ids.end());
  };

  if (stratify_by_user) {
    std::vector<std::vector<ReviewId>> per_user(static_cast<std::size_t>(corpus.users.size()));
    for (const Review& r : corpus.reviews) per_user[static_cast<std::size_t>(r.user)].push_back(r.id);
    for (auto& ids : per_user) assign(ids);
  } else {
    std::vector<ReviewId> ids;
    ids.reserve(corpus.reviews.size());
    for (const Review& r : corpus.reviews) ids.push_back(r.id);
    assign(ids);
  }
  if (out.train.empty() || out.validation.empty() || out.test.empty())
    fail(ErrorKind::config, "corpus of " + std::to_string(corpus.reviews.size()) +
                                " reviews is too small to populate train/validation/test");
  return out;
}

void write_split_manifest(std::ostream& out, const ReviewCorpus& corpus, const SplitSet& splits) {
  for (SplitName s : {SplitName::train, SplitName::validation, SplitName::test}) {
    for (ReviewId id : splits.get(s)) {
      const Review& r = corpus.review(id);
      out << corpus.users.label(r.user) << '\t' << corpus.items.label(r.item) << '\t' << id << '\t'
          << to_string(s) << '\n';
    }
  }
}

SplitSet read_split_manifest(std::istream& in, const ReviewCorpus& corpus) {
  SplitSet out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string user, item, id_text, split;
    if (!std::getline(fields, user, '\t') || !std::getline(fields, item, '\t') ||
        !std::getline(fields, id_text, '\t') || !std::getline(fields, split, '\t'))
      fail(ErrorKind::input, "split manifest line " + std::to_string(line_no) + ": expected 4 fields");
    const auto id = static_cast<ReviewId>(std::stoul(id_text));
    if (!corpus.contains(id))
      fail(ErrorKind::input, "split manifest line " + std::to_string(line_no) + ": unknown review " + id_text);
    switch (split_from_string(split)) {
      case SplitName::train: out.train.push_back(id); break;
      case SplitName::validation: out.validation.push_back(id); break;
      case SplitName::test: out.test.push_back(id); break;
    }
  }
  return out;
}

DocumentBuilder::DocumentBuilder(const ReviewCorpus& corpus, const std::vector<ReviewId>& train,
                                 TokenLookup tokens)
    : corpus_(&corpus),
      tokens_(std::move(tokens)),
      by_user_(static_cast<std::size_t>(corpus.users.size())),
      by_item_(static_cast<std::size_t>(corpus.items.size())) {
  for (ReviewId id : train) {
    const Review& r = corpus.review(id);
    by_user_[static_cast<std::size_t>(r.user)].push_back(id);
    by_item_[static_cast<std::size_t>(r.item)].push_back(id);
  }
  auto order = [&corpus](ReviewId a, ReviewId b) {
    const Review& ra = corpus.review(a);
    const Review& rb = corpus.review(b);
    const auto ta = ra.timestamp.value_or(std::numeric_limits<std::int64_t>::min());
    const auto tb = rb.timestamp.value_or(std::numeric_limits<std::int64_t>::min());
    return std::tie(ta, ra.id) < std::tie(tb, rb.id);
  };
  for (auto& v : by_user_) std::sort(v.begin(), v.end(), order);
  for (auto& v : by_item_) std::sort(v.begin(), v.end(), order);
}

const std::vector<ReviewId>& DocumentBuilder::reviews_of(int entity, Side side) const {
  const auto& table = side == Side::user ? by_user_ : by_item_;
  require(entity >= 0 && static_cast<std::size_t>(entity) < table.size(), "document entity out of range");
  return table[static_cast<std::size_t>(entity)];
}

Document DocumentBuilder::build(int entity, Side side, std::optional<ReviewId> exclude,
                                std::size_t max_tokens) const {
  Document doc;
  doc.entity = entity;
  doc.side = side;
  for (ReviewId id : reviews_of(entity, side)) {
    if (doc.tokens.size() >= max_tokens) break;
    if (exclude && *exclude == id) continue;
    const auto toks = tokens_(corpus_->review(id));
    const std::size_t take = std::min(toks.size(), max_tokens - doc.tokens.size());
    if (take == 0) continue;
    const auto begin = static_cast<std::uint32_t>(doc.tokens.size());
    doc.tokens.insert(doc.tokens.end(), toks.begin(), toks.begin() + static_cast<std::ptrdiff_t>(take));
    doc.provenance.push_back({id, begin, static_cast<std::uint32_t>(doc.tokens.size())});
  }
  return doc;
}

Document build_document(const ReviewCorpus& corpus, const SplitSet& splits, int entity, Side side,
                        std::optional<ReviewId> exclude, std::size_t max_tokens, const TokenLookup& tokens) {
  return DocumentBuilder(corpus, splits.train, tokens).build(entity, side, exclude, max_tokens);
}

}  // namespace kcf::corpus
