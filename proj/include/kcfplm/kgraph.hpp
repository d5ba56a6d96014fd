#pragma once

#include "kcfplm/aspects.hpp"
#include "kcfplm/corpus.hpp"

#include <array>
#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace kcf::kg {

enum class NodeType { user = 0, item = 1, aspect = 2 };

// Forward relations and their materialized inverses. Synonym and
// also-purchase are symmetric and carry the same tag in both directions.
enum class Relation {
  purchase,
  purchase_inv,
  item_aspect_good,
  item_aspect_good_inv,
  item_aspect_bad,
  item_aspect_bad_inv,
  user_aspect_care,
  user_aspect_care_inv,
  aspect_synonym,
  item_also_purchase,
};
inline constexpr int kRelationCount = 10;

std::string to_string(NodeType t);
NodeType node_type_from_string(const std::string& s);
std::string to_string(Relation r);
Relation relation_from_string(const std::string& s);
// (source type, destination type) a relation connects.
std::pair<NodeType, NodeType> signature(Relation r);
Relation inverse(Relation r);

struct NodeRef {
  NodeType type = NodeType::user;
  int local = 0;
  int global = 0;
};

struct Edge {
  int src = 0;  // global ids
  int dst = 0;
  Relation relation = Relation::purchase;
  double weight = 1.0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

struct Neighbor {
  int node = 0;
  double weight = 1.0;
};

class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;
  KnowledgeGraph(std::vector<std::string> users, std::vector<std::string> items, std::vector<std::string> aspects);

  int num_nodes() const { return num_users() + num_items() + num_aspects(); }
  int num_users() const { return static_cast<int>(labels_[0].size()); }
  int num_items() const { return static_cast<int>(labels_[1].size()); }
  int num_aspects() const { return static_cast<int>(labels_[2].size()); }
  int count(NodeType t) const { return static_cast<int>(labels_[static_cast<int>(t)].size()); }

  int global(NodeType t, int local) const;
  NodeRef node(int global) const;
  const std::string& label(NodeType t, int local) const;

  // Inserts the edge and, for asymmetric relations, its inverse. Weights must
  // lie in (0, 1]. Duplicate triples are rejected.
  void add_edge(NodeType src_type, int src_local, Relation r, NodeType dst_type, int dst_local, double weight,
                std::vector<corpus::ReviewId> provenance = {});
  // Sorts edges by (relation, src, dst) and rebuilds adjacency.
  void finalize();

  const std::vector<Edge>& edges() const { return edges_; }
  // Review ids an edge was derived from, parallel to edges().
  const std::vector<std::vector<corpus::ReviewId>>& provenance() const { return provenance_; }
  // Sources j with an edge j -> node under relation r.
  const std::vector<Neighbor>& incoming(Relation r, int node) const;
  std::size_t count_edges(Relation r) const;

  friend bool operator==(const KnowledgeGraph& a, const KnowledgeGraph& b) {
    return a.labels_ == b.labels_ && a.edges_ == b.edges_;
  }

 private:
  friend KnowledgeGraph deserialize_graph(std::istream& nodes, std::istream& edges);
  void insert(int src, int dst, Relation r, double weight, std::vector<corpus::ReviewId> prov);

  std::array<std::vector<std::string>, 3> labels_;
  std::vector<Edge> edges_;
  std::vector<std::vector<corpus::ReviewId>> provenance_;
  std::vector<std::vector<std::vector<Neighbor>>> incoming_;  // [relation][node]
  std::set<std::tuple<int, int, int>> keys_;  // (relation, src, dst)
};

struct PolarityWeights {
  double good = 0.0;
  double bad = 0.0;
};

// n_P / (n_P + n_N) and n_N / (n_P + n_N); domain error when both are zero.
PolarityWeights compute_polarity_weights(int positive, int negative);

struct GraphInputs {
  const corpus::ReviewCorpus* corpus = nullptr;
  const std::vector<corpus::ReviewId>* train = nullptr;
  std::span<const aspects::AspectMention> mentions;  // may include held-out reviews; filtered here
  const aspects::AspectVocabulary* vocab = nullptr;
  std::span<const std::pair<int, int>> synonyms;
};

KnowledgeGraph build_graph(const GraphInputs& in);

// Node table: node_type \t local_id \t label
// Edge list:  src_type:src_id \t relation \t dst_type:dst_id \t weight
void serialize_graph(const KnowledgeGraph& g, std::ostream& nodes, std::ostream& edges);
KnowledgeGraph deserialize_graph(std::istream& nodes, std::istream& edges);

}  // namespace kcf::kg
