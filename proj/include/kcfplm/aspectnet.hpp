#pragma once

#include "kcfplm/aspects.hpp"
#include "kcfplm/nn.hpp"

#include <span>
#include <vector>

namespace kcf::aspectnet {

using ad::Matrix;
using ad::Var;

// 1 + (R - 1)(2 sigmoid(num) - 1); strictly increasing, in [1, R).
double aspect_weight(int num, int rating_max);

// w * (e_kg + e_src), row by row.
Var embed_aspect(const Var& e_kg, const Var& e_src, const Eigen::VectorXd& weights);

struct AttentionParams {
  Var query;   // 2d x d_att
  Var aspect;  // d x d_att
  Var vector;  // d_att x 1
  Var bias1;   // 1 x d_att
  Var bias2;   // 1 x 1
};

// One score per row of p: v^T tanh(q W_q + p_a W_p + b1) + b2. Returns n x 1.
Var attention_score(const Var& query, const Var& p, const AttentionParams& params);
// softmax(scores)^T p; an empty bag pools to a zero row of the given width.
Var pool_aspects(const Var& scores, const Var& p);
Var mean_pool(const Var& p);

struct AspectNetOptions {
  int model_width = 64;
  int layers = 4;
  int heads = 4;
  int ff_width = 0;         // 0 -> 4 * model_width
  int attention_width = 0;  // 0 -> model_width
  int rating_max = 5;
  bool source_embeddings = true;  // false: zero and frozen
  bool weighting = true;          // false: w_a = 1
  bool attention = true;          // false: mean pooling, no scoring parameters
  double init_stddev = 0.02;
};

struct AspectOutput {
  Var pooled;                  // 1 x d
  Var scores;                  // n x 1 (undefined without attention or for empty bags)
  std::vector<double> pool_weights;  // per aspect, sums to 1 when n > 0
  std::vector<double> aspect_weights;  // w_a per aspect
};

class AspectNet {
 public:
  AspectNet() = default;
  AspectNet(nn::ParameterSet& params, const std::string& name, const AspectNetOptions& opts, std::mt19937_64& rng);

  // e_kg holds the projected KG rows of the bag's aspects, in bag order.
  Var embed(const Var& e_kg, std::span<const aspects::BagItem> bag, std::vector<double>* weights = nullptr) const;
  Var contextualize(const Var& e, const nn::RunContext& ctx) const;
  AspectOutput forward(const Var& query, const Var& e_kg, std::span<const aspects::BagItem> bag,
                       const nn::RunContext& ctx) const;

  const AspectNetOptions& options() const { return opts_; }
  const AttentionParams& attention() const { return attention_; }
  const Var& source_table() const { return sources_; }

 private:
  AspectNetOptions opts_;
  Var sources_;
  nn::TransformerStack stack_;
  AttentionParams attention_;
};

}  // namespace kcf::aspectnet
