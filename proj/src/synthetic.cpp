#include "kcfplm/synthetic.hpp"

#include "kcfplm/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

namespace kcf::synthetic {

namespace {

const std::vector<std::string> kAspectNames{
    "fabric", "size",  "color",  "zipper", "stitching", "sleeve", "collar",  "pocket",  "button",
    "waist",  "price", "length", "hood",   "lining",    "strap",  "buckle",  "seam",    "cuff",
    "heel",   "sole",  "laces",  "weight", "warmth",    "shape",  "pattern", "texture", "packaging"};
const std::vector<std::string> kPositive{"great", "soft", "perfect", "lovely", "excellent", "comfortable"};
const std::vector<std::string> kNegative{"poor", "cheap", "awful", "flimsy", "terrible", "scratchy"};
const std::vector<std::string> kFiller{"overall", "honestly", "arrived", "quickly", "ordered", "again",
                                       "wearing", "today",    "bought",  "this",    "for",     "work"};

std::vector<int> sample_distinct(int n, int k, std::mt19937_64& rng) {
  std::vector<int> all(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(static_cast<std::size_t>(std::min(n, k)));
  std::sort(all.begin(), all.end());
  return all;
}

template <class T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
  return v[static_cast<std::size_t>(rng() % v.size())];
}

}  // namespace

SyntheticData generate(const config::SyntheticConfig& cfg, int rating_max) {
  if (cfg.users < 2 || cfg.items < 2 || cfg.aspects < 2 || cfg.interactions < 1)
    fail(ErrorKind::config, "synthetic data needs at least 2 users, items and aspects and one interaction");
  if (cfg.interactions > cfg.users * cfg.items)
    fail(ErrorKind::config, "synthetic.interactions exceeds the number of distinct user-item pairs");
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  SyntheticData out;

  for (int a = 0; a < cfg.aspects; ++a)
    out.aspect_terms.push_back(a < static_cast<int>(kAspectNames.size()) ? kAspectNames[static_cast<std::size_t>(a)]
                                                                         : "feature" + std::to_string(a));
  out.positive = kPositive;
  out.negative = kNegative;

  // Word vectors: every fourth aspect gets a near-duplicate partner.
  std::vector<std::vector<double>> vecs(static_cast<std::size_t>(cfg.aspects));
  for (int a = 0; a < cfg.aspects; ++a) {
    auto& v = vecs[static_cast<std::size_t>(a)];
    if (a % 4 == 1) {
      v = vecs[static_cast<std::size_t>(a - 1)];
      for (auto& x : v) x += 0.05 * gauss(rng);
    } else {
      v.resize(16);
      for (auto& x : v) x = gauss(rng);
    }
    out.word_vectors.emplace_back(out.aspect_terms[static_cast<std::size_t>(a)], v);
  }

  // Per-aspect importance in [-1, 1] scales the bonus of a shared aspect.
  std::vector<double> importance(static_cast<std::size_t>(cfg.aspects));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (auto& c : importance) c = unit(rng);

  const int L = cfg.latent_dim;
  std::vector<std::vector<double>> pu(static_cast<std::size_t>(cfg.users)), qi(static_cast<std::size_t>(cfg.items));
  std::vector<double> bu(static_cast<std::size_t>(cfg.users)), bi(static_cast<std::size_t>(cfg.items));
  for (int u = 0; u < cfg.users; ++u) {
    pu[static_cast<std::size_t>(u)].resize(static_cast<std::size_t>(L));
    for (auto& x : pu[static_cast<std::size_t>(u)]) x = cfg.latent_scale * gauss(rng);
    bu[static_cast<std::size_t>(u)] = 0.3 * gauss(rng);
    out.preferred.push_back(sample_distinct(cfg.aspects, cfg.preferred_per_user, rng));
  }
  for (int i = 0; i < cfg.items; ++i) {
    qi[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(L));
    for (auto& x : qi[static_cast<std::size_t>(i)]) x = cfg.latent_scale * gauss(rng);
    bi[static_cast<std::size_t>(i)] = 0.3 * gauss(rng);
    out.item_aspects.push_back(sample_distinct(cfg.aspects, cfg.aspects_per_item, rng));
  }

  // Interactions: round-robin over users so everyone has history, items drawn
  // at random without repeating a pair.
  std::set<std::pair<int, int>> pairs;
  std::vector<std::pair<int, int>> order;
  int u = 0;
  std::size_t guard = 0;
  while (static_cast<int>(order.size()) < cfg.interactions) {
    const int i = static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.items));
    if (pairs.emplace(u, i).second) {
      order.emplace_back(u, i);
      u = (u + 1) % cfg.users;
    }
    if (++guard > static_cast<std::size_t>(cfg.interactions) * 1000)
      fail(ErrorKind::config, "synthetic generator could not place the requested interactions");
  }

  const double mid = (1.0 + rating_max) / 2.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto [user, item] = order[k];
    const auto& pref = out.preferred[static_cast<std::size_t>(user)];
    const auto& has = out.item_aspects[static_cast<std::size_t>(item)];
    std::vector<int> shared;
    std::set_intersection(pref.begin(), pref.end(), has.begin(), has.end(), std::back_inserter(shared));
    double dot = 0;
    for (int d = 0; d < L; ++d)
      dot += pu[static_cast<std::size_t>(user)][static_cast<std::size_t>(d)] *
             qi[static_cast<std::size_t>(item)][static_cast<std::size_t>(d)];
    double bonus = -0.5 * cfg.aspect_bonus;
    if (!shared.empty()) {
      double best = -1.0;
      for (int a : shared) best = std::max(best, importance[static_cast<std::size_t>(a)]);
      bonus = 0.5 * cfg.aspect_bonus * (1.0 + cfg.aspect_spread * best);
    }
    const double raw = mid + bu[static_cast<std::size_t>(user)] + bi[static_cast<std::size_t>(item)] + dot + bonus +
                       cfg.noise * gauss(rng);
    const int rating = static_cast<int>(std::clamp(std::lround(raw), 1L, static_cast<long>(rating_max)));

    // Reviewers talk about the aspects they care about that the item has, plus
    // a few random aspects of the item, so a user-and-item aspect in a pair's
    // bag marks the bonus.
    std::vector<int> mention = shared;
    for (int m = 0; m < cfg.mentions_per_review; ++m) mention.push_back(pick(has, rng));
    std::string text;
    for (int a : mention) {
      const std::string& term = out.aspect_terms[static_cast<std::size_t>(a)];
      std::string clause;
      if (rating >= 4)
        clause = "the " + term + " is " + pick(kPositive, rng);
      else if (rating <= 2)
        clause = "the " + term + " is " + pick(kNegative, rng);
      else
        clause = "the " + term + " " + pick(kFiller, rng);
      text += (text.empty() ? "" : " and ") + clause;
    }
    if (text.empty()) text = pick(kFiller, rng) + " " + pick(kFiller, rng);
    text += " " + pick(kFiller, rng);

    corpus::Review r;
    r.id = static_cast<corpus::ReviewId>(k);
    r.user = out.corpus.users.intern("user" + std::to_string(user));
    r.item = out.corpus.items.intern("item" + std::to_string(item));
    r.rating = rating;
    r.text = text;
    r.timestamp = static_cast<std::int64_t>(k);
    out.corpus.reviews.push_back(std::move(r));
    out.planted_bonus.push_back(bonus);
  }
  // Items sharing two or more aspects are bought together.
  for (int i = 0; i < cfg.items; ++i)
    for (int j = i + 1; j < cfg.items; ++j) {
      std::vector<int> common;
      const auto& a = out.item_aspects[static_cast<std::size_t>(i)];
      const auto& b = out.item_aspects[static_cast<std::size_t>(j)];
      std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
      if (common.size() >= 2 && out.corpus.items.find("item" + std::to_string(i)) &&
          out.corpus.items.find("item" + std::to_string(j)))
        out.corpus.also_buy["item" + std::to_string(i)].push_back("item" + std::to_string(j));
    }
  out.corpus.rating_max = rating_max;
  out.corpus.reindex();
  return out;
}

void write(const SyntheticData& data, const std::string& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream f(std::filesystem::path(dir) / name);
    if (!f) fail(ErrorKind::input, "cannot write " + (std::filesystem::path(dir) / name).string());
    return f;
  };
  {
    auto f = open("reviews.jsonl");
    corpus::write_reviews(f, data.corpus);
  }
  auto lines = [&](const std::string& name, const std::vector<std::string>& v) {
    auto f = open(name);
    for (const auto& s : v) f << s << '\n';
  };
  lines("aspect_terms.txt", data.aspect_terms);
  lines("positive.txt", data.positive);
  lines("negative.txt", data.negative);
  auto f = open("vectors.txt");
  f.precision(17);
  for (const auto& [term, v] : data.word_vectors) {
    f << term;
    for (double x : v) f << ' ' << x;
    f << '\n';
  }
}

}  // namespace kcf::synthetic
