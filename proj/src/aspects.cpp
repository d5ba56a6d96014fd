#include "kcfplm/aspects.hpp"

#include "kcfplm/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace kcf::aspects {

std::string to_string(Polarity p) {
  switch (p) {
    case Polarity::positive: return "positive";
    case Polarity::negative: return "negative";
    case Polarity::neutral: return "neutral";
  }
  return "neutral";
}

Polarity polarity_from_string(const std::string& s) {
  if (s == "positive") return Polarity::positive;
  if (s == "negative") return Polarity::negative;
  if (s == "neutral") return Polarity::neutral;
  fail(ErrorKind::input, "unknown polarity: " + s);
}

std::string to_string(Source s) {
  switch (s) {
    case Source::user: return "user";
    case Source::item: return "item";
    case Source::both: return "both";
  }
  return "user";
}

std::string canonical_term(std::string_view raw) {
  std::string out;
  bool pending_space = false;
  for (char c : raw) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isspace(uc)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(uc)));
  }
  return out;
}

int AspectVocabulary::add(std::string_view raw) {
  std::string term = canonical_term(raw);
  if (term.empty()) return -1;
  auto [it, inserted] = index_.try_emplace(term, static_cast<int>(entries_.size()));
  if (inserted) entries_.push_back(std::move(term));
  return it->second;
}

std::optional<int> AspectVocabulary::find(std::string_view raw) const {
  auto it = index_.find(canonical_term(raw));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

AspectVocabulary canonicalize(std::span<const std::string> raw_terms) {
  AspectVocabulary vocab;
  for (const auto& t : raw_terms) vocab.add(t);
  return vocab;
}

std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc) || c == '\'') {
      cur.push_back(static_cast<char>(std::tolower(uc)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

LexiconExtractor::LexiconExtractor(const AspectVocabulary& vocab, std::set<std::string> positive,
                                   std::set<std::string> negative, int window)
    : positive_(std::move(positive)), negative_(std::move(negative)), window_(window) {
  for (int id = 0; id < vocab.size(); ++id) {
    // Match on the same word segmentation the text gets.
    const auto words = word_tokens(vocab.term(id));
    if (words.empty()) continue;
    std::string key;
    for (const auto& w : words) key += (key.empty() ? "" : " ") + w;
    phrases_.emplace(key, id);
    longest_ = std::max(longest_, words.size());
  }
}

std::vector<AspectMention> LexiconExtractor::extract(const corpus::Review& review) const {
  const auto words = word_tokens(review.text);
  const auto n = static_cast<int>(words.size());
  std::vector<int> sentiment(words.size(), 0);
  for (int k = 0; k < n; ++k) {
    if (positive_.count(words[static_cast<std::size_t>(k)])) sentiment[static_cast<std::size_t>(k)] = 1;
    if (negative_.count(words[static_cast<std::size_t>(k)])) sentiment[static_cast<std::size_t>(k)] = -1;
  }

  std::vector<AspectMention> out;
  int p = 0;
  while (p < n) {
    int matched_len = 0;
    int matched_id = -1;
    for (int len = static_cast<int>(std::min<std::size_t>(longest_, static_cast<std::size_t>(n - p))); len >= 1;
         --len) {
      std::string key;
      for (int k = p; k < p + len; ++k) key += (k == p ? "" : " ") + words[static_cast<std::size_t>(k)];
      auto it = phrases_.find(key);
      if (it != phrases_.end()) {
        matched_len = len;
        matched_id = it->second;
        break;
      }
    }
    if (matched_len == 0) {
      ++p;
      continue;
    }
    const int first = p;
    const int last = p + matched_len - 1;
    int best_dist = window_ + 1;
    int best_sign = 0;
    for (int q = std::max(0, first - window_); q <= std::min(n - 1, last + window_); ++q) {
      const int s = sentiment[static_cast<std::size_t>(q)];
      if (s == 0 || (q >= first && q <= last)) continue;
      const int d = q < first ? first - q : q - last;
      if (d < best_dist) {
        best_dist = d;
        best_sign = s;
      } else if (d == best_dist && s != best_sign) {
        best_sign = 0;  // opposite words at equal distance
      }
    }
    const Polarity pol = best_sign > 0 ? Polarity::positive : best_sign < 0 ? Polarity::negative : Polarity::neutral;
    out.push_back({review.id, matched_id, pol});
    p += matched_len;
  }
  return out;
}

std::vector<AspectMention> extract_mentions(const corpus::Review& review, const AspectExtractor& extractor) {
  if (review.text.empty()) return {};
  return extractor.extract(review);
}

std::vector<std::string> read_lexicon(std::istream& in) {
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const std::string term = canonical_term(line);
    if (term.empty() || term[0] == '#') continue;
    out.push_back(term);
  }
  return out;
}

std::vector<std::string> read_lexicon_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::input, "cannot open lexicon file: " + path);
  return read_lexicon(in);
}

void write_mentions(std::ostream& out, std::span<const AspectMention> mentions, const AspectVocabulary& vocab) {
  for (const auto& m : mentions) out << m.review << '\t' << vocab.term(m.aspect) << '\t' << to_string(m.polarity) << '\n';
}

std::vector<AspectMention> read_mentions(std::istream& in, const AspectVocabulary& vocab) {
  std::vector<AspectMention> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string id, term, pol;
    if (!std::getline(fields, id, '\t') || !std::getline(fields, term, '\t') || !std::getline(fields, pol, '\t'))
      fail(ErrorKind::input, "mention dump line " + std::to_string(line_no) + ": expected 3 fields");
    const auto aspect = vocab.find(term);
    if (!aspect) fail(ErrorKind::input, "mention dump line " + std::to_string(line_no) + ": unknown aspect " + term);
    out.push_back({static_cast<ReviewId>(std::stoul(id)), *aspect, polarity_from_string(pol)});
  }
  return out;
}

MentionIndex::MentionIndex(const corpus::ReviewCorpus& corpus, const std::vector<ReviewId>& train,
                           std::span<const AspectMention> mentions)
    : by_user_(static_cast<std::size_t>(corpus.users.size())), by_item_(static_cast<std::size_t>(corpus.items.size())) {
  std::set<ReviewId> train_set(train.begin(), train.end());
  for (const auto& m : mentions) {
    if (!train_set.count(m.review)) continue;
    const auto& r = corpus.review(m.review);
    by_user_[static_cast<std::size_t>(r.user)].push_back({m.review, m.aspect, m.polarity});
    by_item_[static_cast<std::size_t>(r.item)].push_back({m.review, m.aspect, m.polarity});
  }
}

AspectBag MentionIndex::collect(int user, int item, std::optional<ReviewId> exclude, std::size_t max_aspects) const {
  std::map<int, std::pair<int, int>> counts;  // aspect -> (user side, item side)
  for (const auto& e : of_user(user))
    if (!exclude || e.review != *exclude) ++counts[e.aspect].first;
  for (const auto& e : of_item(item))
    if (!exclude || e.review != *exclude) ++counts[e.aspect].second;

  AspectBag bag;
  bag.user = user;
  bag.item = item;
  for (const auto& [aspect, c] : counts) {
    BagItem b;
    b.aspect = aspect;
    b.user_count = c.first;
    b.item_count = c.second;
    b.num = c.first + c.second;
    b.source = c.first > 0 && c.second > 0 ? Source::both : c.first > 0 ? Source::user : Source::item;
    bag.items.push_back(b);
  }
  bag.untruncated_size = static_cast<int>(bag.items.size());
  std::stable_sort(bag.items.begin(), bag.items.end(), [](const BagItem& a, const BagItem& b) {
    return a.num != b.num ? a.num > b.num : a.aspect < b.aspect;
  });
  if (bag.items.size() > max_aspects) bag.items.resize(max_aspects);
  return bag;
}

AspectBag collect_pair_aspects(int user, int item, const MentionIndex& index, std::optional<ReviewId> exclude,
                               std::size_t max_aspects) {
  return index.collect(user, item, exclude, max_aspects);
}

VectorSimilarity VectorSimilarity::read(std::istream& in) {
  VectorSimilarity out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string term;
    if (!(fields >> term)) continue;
    std::vector<double> vec;
    double x;
    while (fields >> x) vec.push_back(x);
    if (vec.empty()) fail(ErrorKind::input, "vector file line " + std::to_string(line_no) + ": no values");
    if (out.dim_ != 0 && vec.size() != out.dim_)
      fail(ErrorKind::input, "vector file line " + std::to_string(line_no) + ": dimension mismatch");
    out.add(canonical_term(term), std::move(vec));
  }
  return out;
}

VectorSimilarity VectorSimilarity::read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::input, "cannot open vector file: " + path);
  return read(in);
}

void VectorSimilarity::add(const std::string& term, std::vector<double> vec) {
  if (dim_ == 0) dim_ = vec.size();
  require(vec.size() == dim_, "vector dimension mismatch for " + term);
  vectors_[term] = std::move(vec);
}

std::optional<std::vector<double>> VectorSimilarity::lookup(const std::string& term) const {
  if (auto it = vectors_.find(term); it != vectors_.end()) return it->second;
  const auto words = word_tokens(term);
  if (words.size() < 2) return std::nullopt;
  std::vector<double> mean(dim_, 0.0);
  for (const auto& w : words) {
    auto it = vectors_.find(w);
    if (it == vectors_.end()) return std::nullopt;
    for (std::size_t k = 0; k < dim_; ++k) mean[k] += it->second[k] / static_cast<double>(words.size());
  }
  return mean;
}

std::optional<double> VectorSimilarity::similarity(const std::string& a, const std::string& b) const {
  const auto va = lookup(a);
  const auto vb = lookup(b);
  if (!va || !vb) return std::nullopt;
  double dot = 0, na = 0, nb = 0;
  for (std::size_t k = 0; k < dim_; ++k) {
    dot += (*va)[k] * (*vb)[k];
    na += (*va)[k] * (*va)[k];
    nb += (*vb)[k] * (*vb)[k];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

SynonymResult synonym_pairs(const AspectVocabulary& vocab, const SimilarityProvider& sim, double threshold) {
  SynonymResult out;
  for (int a = 0; a < vocab.size(); ++a) {
    for (int b = a + 1; b < vocab.size(); ++b) {
      const auto s = sim.similarity(vocab.term(a), vocab.term(b));
      if (!s) {
        ++out.skipped_missing;
        continue;
      }
      if (*s >= threshold) out.pairs.emplace_back(a, b);
    }
  }
  return out;
}

}  // namespace kcf::aspects
