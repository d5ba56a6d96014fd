#include "kcfplm/gnn.hpp"

#include "kcfplm/error.hpp"

#include <cmath>

namespace kcf::gnn {

Adjacency normalized_adjacency(const kg::KnowledgeGraph& g) {
  Adjacency adj;
  adj.nodes = g.num_nodes();
  for (int r = 0; r < kg::kRelationCount; ++r) {
    std::vector<Eigen::Triplet<double>> entries;
    for (int i = 0; i < g.num_nodes(); ++i) {
      const auto& nb = g.incoming(static_cast<kg::Relation>(r), i);
      const double c = static_cast<double>(nb.size());
      for (const auto& n : nb) entries.emplace_back(i, n.node, n.weight / c);
    }
    auto& s = adj.relations[static_cast<std::size_t>(r)];
    s.resize(adj.nodes, adj.nodes);
    s.setFromTriplets(entries.begin(), entries.end());
    s.makeCompressed();
  }
  return adj;
}

RelationalLayerParams make_layer_params(nn::ParameterSet& params, const std::string& name, int width,
                                        std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(width));
  RelationalLayerParams p;
  for (int r = 0; r < kg::kRelationCount; ++r)
    p.relation[static_cast<std::size_t>(r)] =
        params.add(name + ".W_" + kg::to_string(static_cast<kg::Relation>(r)),
                   nn::uniform_matrix(width, width, bound, rng));
  p.self = params.add(name + ".W_self", nn::uniform_matrix(width, width, bound, rng));
  return p;
}

Var relational_layer(const Adjacency& adj, const Var& x, const RelationalLayerParams& p, bool activate) {
  require(x.rows() == adj.nodes, "relational layer: embedding rows do not match the graph");
  Var out = ad::matmul(x, p.self);
  for (int r = 0; r < kg::kRelationCount; ++r) {
    const auto& a = adj.relations[static_cast<std::size_t>(r)];
    if (a.nonZeros() == 0) continue;
    out = out + ad::matmul(ad::spmm(a, x), p.relation[static_cast<std::size_t>(r)]);
  }
  return activate ? ad::relu(out) : out;
}

Var propagate(const Adjacency& adj, const Var& x, std::span<const RelationalLayerParams> layers, bool activate) {
  require(!layers.empty(), "propagate needs at least one layer");
  Var h = x;
  for (const auto& p : layers) h = relational_layer(adj, h, p, activate);
  return h;
}

GraphEncoder::GraphEncoder(nn::ParameterSet& params, const std::string& name, int num_nodes, const GnnOptions& opts,
                           std::mt19937_64& rng) {
  require(opts.layers >= 1, "graph encoder needs at least one layer");
  embeddings_ = params.add(name + ".embedding", nn::normal_matrix(num_nodes, opts.kg_width, opts.init_stddev, rng));
  for (int l = 0; l < opts.layers; ++l)
    layers_.push_back(make_layer_params(params, name + ".layer" + std::to_string(l), opts.kg_width, rng));
  for (kg::NodeType t : {kg::NodeType::user, kg::NodeType::item, kg::NodeType::aspect})
    projections_[static_cast<std::size_t>(t)] =
        nn::Mlp2(params, name + ".project_" + kg::to_string(t), opts.kg_width, opts.model_width, opts.model_width, rng);
  classifier_ = nn::Mlp2(params, name + ".type_head", opts.kg_width, opts.model_width, 3, rng);
}

Var GraphEncoder::propagate(const Adjacency& adj) const { return gnn::propagate(adj, embeddings_, layers_); }

Var GraphEncoder::project(const Var& rows, kg::NodeType type) const {
  return projections_[static_cast<std::size_t>(type)].forward(rows);
}

Var GraphEncoder::type_logits(const Var& rep) const { return classifier_.forward(rep); }
Var GraphEncoder::type_probs(const Var& rep) const { return ad::softmax_rows(type_logits(rep)); }

std::vector<int> node_type_labels(const kg::KnowledgeGraph& g) {
  std::vector<int> out(static_cast<std::size_t>(g.num_nodes()));
  for (int v = 0; v < g.num_nodes(); ++v) out[static_cast<std::size_t>(v)] = static_cast<int>(g.node(v).type);
  return out;
}

TypeLossResult node_type_loss(const Var& logits, std::span<const int> labels, std::span<const int> rows, double eps) {
  require(static_cast<std::size_t>(logits.rows()) == labels.size(), "node type loss: label count mismatch");
  TypeLossResult out;
  if (rows.empty()) {
    out.loss = ad::softmax_cross_entropy(logits, labels, eps, &out.clamped);
    return out;
  }
  std::vector<int> picked;
  picked.reserve(rows.size());
  for (int r : rows) picked.push_back(labels[static_cast<std::size_t>(r)]);
  out.loss = ad::softmax_cross_entropy(ad::gather_rows(logits, rows), picked, eps, &out.clamped);
  return out;
}

}  // namespace kcf::gnn
