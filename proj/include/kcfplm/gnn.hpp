#pragma once

#include "kcfplm/kgraph.hpp"
#include "kcfplm/nn.hpp"

#include <array>
#include <span>
#include <vector>

namespace kcf::gnn {

using ad::Matrix;
using ad::Var;

// A_r[i, j] = w_e / |N_i^r| for every edge j -> i of relation r.
struct Adjacency {
  std::array<ad::Sparse, kg::kRelationCount> relations;
  int nodes = 0;
};

Adjacency normalized_adjacency(const kg::KnowledgeGraph& g);

// Weights of one relational convolution layer: W_r per relation and W_0.
struct RelationalLayerParams {
  std::array<Var, kg::kRelationCount> relation;
  Var self;
};

RelationalLayerParams make_layer_params(nn::ParameterSet& params, const std::string& name, int width,
                                        std::mt19937_64& rng);

// relu(sum_r A_r X W_r + X W_0); `activate` = false skips the rectifier.
Var relational_layer(const Adjacency& adj, const Var& x, const RelationalLayerParams& p, bool activate = true);
Var propagate(const Adjacency& adj, const Var& x, std::span<const RelationalLayerParams> layers,
              bool activate = true);

struct GnnOptions {
  int kg_width = 64;
  int model_width = 64;
  int layers = 1;
  double init_stddev = 0.02;
};

// Node embedding table over global ids, stacked relational layers, one
// projection MLP per node type and the node-type classifier.
class GraphEncoder {
 public:
  GraphEncoder() = default;
  GraphEncoder(nn::ParameterSet& params, const std::string& name, int num_nodes, const GnnOptions& opts,
               std::mt19937_64& rng);

  const Var& embeddings() const { return embeddings_; }
  Var propagate(const Adjacency& adj) const;
  // MLP_T(rows) for node type T.
  Var project(const Var& rows, kg::NodeType type) const;
  Var type_logits(const Var& rep) const;
  Var type_probs(const Var& rep) const;

  int layers() const { return static_cast<int>(layers_.size()); }
  const RelationalLayerParams& layer(int l) const { return layers_.at(static_cast<std::size_t>(l)); }

 private:
  Var embeddings_;
  std::vector<RelationalLayerParams> layers_;
  std::array<nn::Mlp2, 3> projections_;
  nn::Mlp2 classifier_;
};

// Class index per global node id.
std::vector<int> node_type_labels(const kg::KnowledgeGraph& g);

struct TypeLossResult {
  Var loss;
  int clamped = 0;
};

// Mean cross-entropy over the selected nodes (all nodes when `rows` is empty).
TypeLossResult node_type_loss(const Var& logits, std::span<const int> labels, std::span<const int> rows = {},
                              double eps = 1e-12);

}  // namespace kcf::gnn
