#include "kcfplm/kgraph.hpp"

#include "kcfplm/error.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

namespace kcf::kg {

namespace {

struct RelationInfo {
  Relation relation;
  const char* name;
  NodeType src;
  NodeType dst;
  Relation inverse;
};

constexpr std::array<RelationInfo, kRelationCount> kRelations{{
    {Relation::purchase, "purchase", NodeType::user, NodeType::item, Relation::purchase_inv},
    {Relation::purchase_inv, "purchase_inv", NodeType::item, NodeType::user, Relation::purchase},
    {Relation::item_aspect_good, "item_aspect_good", NodeType::item, NodeType::aspect, Relation::item_aspect_good_inv},
    {Relation::item_aspect_good_inv, "item_aspect_good_inv", NodeType::aspect, NodeType::item,
     Relation::item_aspect_good},
    {Relation::item_aspect_bad, "item_aspect_bad", NodeType::item, NodeType::aspect, Relation::item_aspect_bad_inv},
    {Relation::item_aspect_bad_inv, "item_aspect_bad_inv", NodeType::aspect, NodeType::item,
     Relation::item_aspect_bad},
    {Relation::user_aspect_care, "user_aspect_care", NodeType::user, NodeType::aspect, Relation::user_aspect_care_inv},
    {Relation::user_aspect_care_inv, "user_aspect_care_inv", NodeType::aspect, NodeType::user,
     Relation::user_aspect_care},
    {Relation::aspect_synonym, "aspect_synonym", NodeType::aspect, NodeType::aspect, Relation::aspect_synonym},
    {Relation::item_also_purchase, "item_also_purchase", NodeType::item, NodeType::item,
     Relation::item_also_purchase},
}};

const RelationInfo& info(Relation r) { return kRelations[static_cast<std::size_t>(r)]; }

std::string format_weight(double w) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", w);
  return buf;
}

}  // namespace

std::string to_string(NodeType t) {
  switch (t) {
    case NodeType::user: return "user";
    case NodeType::item: return "item";
    case NodeType::aspect: return "aspect";
  }
  return "user";
}

NodeType node_type_from_string(const std::string& s) {
  if (s == "user") return NodeType::user;
  if (s == "item") return NodeType::item;
  if (s == "aspect") return NodeType::aspect;
  fail(ErrorKind::input, "unknown node type: " + s);
}

std::string to_string(Relation r) { return info(r).name; }

Relation relation_from_string(const std::string& s) {
  for (const auto& r : kRelations)
    if (s == r.name) return r.relation;
  fail(ErrorKind::input, "unknown relation: " + s);
}

std::pair<NodeType, NodeType> signature(Relation r) { return {info(r).src, info(r).dst}; }
Relation inverse(Relation r) { return info(r).inverse; }

KnowledgeGraph::KnowledgeGraph(std::vector<std::string> users, std::vector<std::string> items,
                               std::vector<std::string> aspects)
    : labels_{std::move(users), std::move(items), std::move(aspects)} {
  finalize();
}

int KnowledgeGraph::global(NodeType t, int local) const {
  require(local >= 0 && local < count(t), "node " + to_string(t) + ":" + std::to_string(local) + " out of range");
  switch (t) {
    case NodeType::user: return local;
    case NodeType::item: return num_users() + local;
    case NodeType::aspect: return num_users() + num_items() + local;
  }
  return local;
}

NodeRef KnowledgeGraph::node(int g) const {
  require(g >= 0 && g < num_nodes(), "global node id out of range");
  if (g < num_users()) return {NodeType::user, g, g};
  if (g < num_users() + num_items()) return {NodeType::item, g - num_users(), g};
  return {NodeType::aspect, g - num_users() - num_items(), g};
}

const std::string& KnowledgeGraph::label(NodeType t, int local) const {
  return labels_[static_cast<std::size_t>(t)].at(static_cast<std::size_t>(local));
}

void KnowledgeGraph::insert(int src, int dst, Relation r, double weight, std::vector<corpus::ReviewId> prov) {
  if (!(weight > 0.0 && weight <= 1.0))
    fail(ErrorKind::domain, "edge weight " + format_weight(weight) + " outside (0, 1]");
  if (!keys_.emplace(static_cast<int>(r), src, dst).second)
    fail(ErrorKind::input, "duplicate edge " + std::to_string(src) + " " + to_string(r) + " " + std::to_string(dst));
  edges_.push_back({src, dst, r, weight});
  provenance_.push_back(std::move(prov));
}

void KnowledgeGraph::add_edge(NodeType src_type, int src_local, Relation r, NodeType dst_type, int dst_local,
                              double weight, std::vector<corpus::ReviewId> provenance) {
  const auto [want_src, want_dst] = signature(r);
  if (src_type != want_src || dst_type != want_dst)
    fail(ErrorKind::input, "relation " + to_string(r) + " cannot connect " + to_string(src_type) + " to " +
                               to_string(dst_type));
  const int src = global(src_type, src_local);
  const int dst = global(dst_type, dst_local);
  if (src == dst) fail(ErrorKind::input, "self-loop edges are not stored");
  insert(src, dst, r, weight, provenance);
  insert(dst, src, inverse(r), weight, std::move(provenance));
}

void KnowledgeGraph::finalize() {
  std::vector<std::size_t> order(edges_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [this](std::size_t a, std::size_t b) {
    const Edge& x = edges_[a];
    const Edge& y = edges_[b];
    return std::tie(x.relation, x.src, x.dst) < std::tie(y.relation, y.src, y.dst);
  });
  std::vector<Edge> edges;
  std::vector<std::vector<corpus::ReviewId>> prov;
  edges.reserve(order.size());
  prov.reserve(order.size());
  for (std::size_t k : order) {
    edges.push_back(edges_[k]);
    prov.push_back(std::move(provenance_[k]));
  }
  edges_ = std::move(edges);
  provenance_ = std::move(prov);

  incoming_.assign(kRelationCount, std::vector<std::vector<Neighbor>>(static_cast<std::size_t>(num_nodes())));
  for (const Edge& e : edges_)
    incoming_[static_cast<std::size_t>(e.relation)][static_cast<std::size_t>(e.dst)].push_back({e.src, e.weight});
}

const std::vector<Neighbor>& KnowledgeGraph::incoming(Relation r, int node) const {
  return incoming_.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(node));
}

std::size_t KnowledgeGraph::count_edges(Relation r) const {
  return static_cast<std::size_t>(
      std::count_if(edges_.begin(), edges_.end(), [r](const Edge& e) { return e.relation == r; }));
}

PolarityWeights compute_polarity_weights(int positive, int negative) {
  if (positive < 0 || negative < 0 || positive + negative == 0)
    fail(ErrorKind::domain, "polarity weights need n_P + n_N >= 1 with nonnegative counts");
  const double total = positive + negative;
  return {positive / total, negative / total};
}

KnowledgeGraph build_graph(const GraphInputs& in) {
  require(in.corpus && in.train && in.vocab, "build_graph: missing inputs");
  const auto& corpus = *in.corpus;
  KnowledgeGraph g(corpus.users.labels(), corpus.items.labels(), in.vocab->entries());

  std::set<corpus::ReviewId> train_set;
  std::map<std::pair<int, int>, std::vector<corpus::ReviewId>> purchases;
  for (corpus::ReviewId id : *in.train) {
    if (!corpus.contains(id)) fail(ErrorKind::input, "train split names unknown review " + std::to_string(id));
    train_set.insert(id);
    const auto& r = corpus.review(id);
    purchases[{r.user, r.item}].push_back(id);
  }
  for (auto& [pair, prov] : purchases)
    g.add_edge(NodeType::user, pair.first, Relation::purchase, NodeType::item, pair.second, 1.0, std::move(prov));

  struct Polar {
    int positive = 0;
    int negative = 0;
    std::vector<corpus::ReviewId> prov;
  };
  std::map<std::pair<int, int>, Polar> item_aspect;
  std::map<std::pair<int, int>, std::vector<corpus::ReviewId>> user_aspect;
  for (const auto& m : in.mentions) {
    if (m.aspect < 0 || m.aspect >= in.vocab->size())
      fail(ErrorKind::input, "mention of review " + std::to_string(m.review) + " has unknown aspect id " +
                                 std::to_string(m.aspect));
    if (!corpus.contains(m.review))
      fail(ErrorKind::input, "mention refers to unknown review " + std::to_string(m.review));
    if (!train_set.count(m.review)) continue;
    const auto& r = corpus.review(m.review);
    user_aspect[{r.user, m.aspect}].push_back(m.review);
    if (m.polarity == aspects::Polarity::neutral) continue;
    auto& p = item_aspect[{r.item, m.aspect}];
    (m.polarity == aspects::Polarity::positive ? p.positive : p.negative) += 1;
    p.prov.push_back(m.review);
  }
  for (auto& [key, p] : item_aspect) {
    const auto w = compute_polarity_weights(p.positive, p.negative);
    if (w.good > 0)
      g.add_edge(NodeType::item, key.first, Relation::item_aspect_good, NodeType::aspect, key.second, w.good, p.prov);
    if (w.bad > 0)
      g.add_edge(NodeType::item, key.first, Relation::item_aspect_bad, NodeType::aspect, key.second, w.bad, p.prov);
  }
  for (auto& [key, prov] : user_aspect)
    g.add_edge(NodeType::user, key.first, Relation::user_aspect_care, NodeType::aspect, key.second, 1.0,
               std::move(prov));

  std::set<std::pair<int, int>> synonyms;
  for (auto [a, b] : in.synonyms) {
    if (a < 0 || b < 0 || a >= in.vocab->size() || b >= in.vocab->size())
      fail(ErrorKind::input, "synonym pair (" + std::to_string(a) + ", " + std::to_string(b) + ") out of range");
    if (a == b) continue;
    synonyms.emplace(std::min(a, b), std::max(a, b));
  }
  for (auto [a, b] : synonyms)
    g.add_edge(NodeType::aspect, a, Relation::aspect_synonym, NodeType::aspect, b, 1.0);

  std::set<std::pair<int, int>> also;
  for (const auto& [item, others] : corpus.also_buy) {
    const auto i = corpus.items.find(item);
    if (!i) continue;
    for (const auto& other : others) {
      const auto j = corpus.items.find(other);
      if (!j || *i == *j) continue;
      also.emplace(std::min(*i, *j), std::max(*i, *j));
    }
  }
  for (auto [i, j] : also) g.add_edge(NodeType::item, i, Relation::item_also_purchase, NodeType::item, j, 1.0);

  g.finalize();
  return g;
}

void serialize_graph(const KnowledgeGraph& g, std::ostream& nodes, std::ostream& edges) {
  for (NodeType t : {NodeType::user, NodeType::item, NodeType::aspect})
    for (int k = 0; k < g.count(t); ++k) nodes << to_string(t) << '\t' << k << '\t' << g.label(t, k) << '\n';
  for (const Edge& e : g.edges()) {
    const auto s = g.node(e.src);
    const auto d = g.node(e.dst);
    edges << to_string(s.type) << ':' << s.local << '\t' << to_string(e.relation) << '\t' << to_string(d.type) << ':'
          << d.local << '\t' << format_weight(e.weight) << '\n';
  }
}

namespace {

std::pair<NodeType, int> parse_ref(const std::string& text, std::size_t line_no) {
  const auto colon = text.find(':');
  if (colon == std::string::npos)
    fail(ErrorKind::input, "edge list line " + std::to_string(line_no) + ": malformed node reference '" + text + "'");
  int local = 0;
  const auto* first = text.data() + colon + 1;
  const auto* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, local);
  if (ec != std::errc{} || ptr != last)
    fail(ErrorKind::input, "edge list line " + std::to_string(line_no) + ": malformed node id '" + text + "'");
  return {node_type_from_string(text.substr(0, colon)), local};
}

}  // namespace

KnowledgeGraph deserialize_graph(std::istream& nodes, std::istream& edges) {
  std::array<std::vector<std::string>, 3> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(nodes, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream f(line);
    std::string type, local, label;
    if (!std::getline(f, type, '\t') || !std::getline(f, local, '\t'))
      fail(ErrorKind::input, "node table line " + std::to_string(line_no) + ": expected 3 fields");
    std::getline(f, label);
    auto& table = labels[static_cast<std::size_t>(node_type_from_string(type))];
    if (std::stoul(local) != table.size())
      fail(ErrorKind::input, "node table line " + std::to_string(line_no) + ": local ids must be contiguous");
    table.push_back(label);
  }
  KnowledgeGraph g(labels[0], labels[1], labels[2]);

  line_no = 0;
  while (std::getline(edges, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream f(line);
    std::string src, rel, dst, weight;
    if (!std::getline(f, src, '\t') || !std::getline(f, rel, '\t') || !std::getline(f, dst, '\t') ||
        !std::getline(f, weight, '\t'))
      fail(ErrorKind::input, "edge list line " + std::to_string(line_no) + ": expected 4 tab-separated fields");
    const auto [st, sl] = parse_ref(src, line_no);
    const auto [dt, dl] = parse_ref(dst, line_no);
    Relation r;
    double w = 0;
    try {
      r = relation_from_string(rel);
      std::size_t used = 0;
      w = std::stod(weight, &used);
      if (used != weight.size()) throw std::invalid_argument("trailing characters");
      const auto [want_s, want_d] = signature(r);
      if (st != want_s || dt != want_d) throw std::invalid_argument("endpoint types do not match relation");
      g.insert(g.global(st, sl), g.global(dt, dl), r, w, {});
    } catch (const std::exception& e) {
      fail(ErrorKind::input, "edge list line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  g.finalize();
  return g;
}

}  // namespace kcf::kg
