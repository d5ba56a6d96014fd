#include "kcfplm/aspectnet.hpp"

#include "kcfplm/error.hpp"

#include <algorithm>
#include <cmath>

namespace kcf::aspectnet {

double aspect_weight(int num, int rating_max) {
  if (num < 0 || rating_max < 2)
    fail(ErrorKind::domain, "aspect weight needs num >= 0 and R >= 2 (got num=" + std::to_string(num) +
                                ", R=" + std::to_string(rating_max) + ")");
  // 2 sigmoid(x) - 1 == tanh(x / 2), without the cancellation near 0. For
  // num >= 38 the sum rounds to R itself; keep the range half-open.
  const double w = 1.0 + (rating_max - 1) * std::tanh(0.5 * num);
  return std::min(w, std::nextafter(static_cast<double>(rating_max), 0.0));
}

Var embed_aspect(const Var& e_kg, const Var& e_src, const Eigen::VectorXd& weights) {
  require(e_kg.rows() == e_src.rows() && e_kg.cols() == e_src.cols(), "embed_aspect: shape mismatch");
  require(weights.size() == e_kg.rows(), "embed_aspect: one weight per aspect expected");
  return ad::scale_rows(e_kg + e_src, weights);
}

Var attention_score(const Var& query, const Var& p, const AttentionParams& a) {
  require(query.rows() == 1, "attention_score: query must be a single row");
  const Var guide = ad::add(ad::matmul(query, a.query), a.bias1);
  const Var hidden = ad::tanh(ad::add_row(ad::matmul(p, a.aspect), guide));
  return ad::add_row(ad::matmul(hidden, a.vector), a.bias2);
}

Var pool_aspects(const Var& scores, const Var& p) {
  require(scores.rows() == p.rows() && scores.cols() == 1, "pool_aspects: one score per aspect expected");
  if (p.rows() == 0) return ad::zeros(1, p.cols());
  return ad::matmul(ad::softmax_rows(ad::transpose(scores)), p);
}

Var mean_pool(const Var& p) {
  if (p.rows() == 0) return ad::zeros(1, p.cols());
  return ad::mean_rows(p);
}

AspectNet::AspectNet(nn::ParameterSet& params, const std::string& name, const AspectNetOptions& opts,
                     std::mt19937_64& rng)
    : opts_(opts) {
  const int d = opts.model_width;
  if (opts_.ff_width == 0) opts_.ff_width = 4 * d;
  if (opts_.attention_width == 0) opts_.attention_width = d;
  const int da = opts_.attention_width;
  if (opts.source_embeddings)
    sources_ = params.add(name + ".source_embedding", nn::normal_matrix(3, d, opts.init_stddev, rng));
  else
    sources_ = params.add(name + ".source_embedding", Matrix::Zero(3, d), false);
  nn::TransformerOptions t;
  t.width = d;
  t.heads = opts.heads;
  t.ff_width = opts_.ff_width;
  t.pre_norm = true;
  t.activation = nn::Activation::relu;
  stack_ = nn::TransformerStack(params, name + ".transformer", opts.layers, t, rng);
  if (opts.attention) {
    attention_.query = params.add(name + ".attention.W_q", nn::uniform_matrix(2 * d, da, 1.0 / std::sqrt(2.0 * d), rng));
    attention_.aspect = params.add(name + ".attention.W_p", nn::uniform_matrix(d, da, 1.0 / std::sqrt(1.0 * d), rng));
    attention_.vector = params.add(name + ".attention.w", nn::uniform_matrix(da, 1, 1.0 / std::sqrt(1.0 * da), rng));
    attention_.bias1 = params.add(name + ".attention.b1", Matrix::Zero(1, da));
    attention_.bias2 = params.add(name + ".attention.b2", Matrix::Zero(1, 1));
  }
}

Var AspectNet::embed(const Var& e_kg, std::span<const aspects::BagItem> bag, std::vector<double>* weights) const {
  require(static_cast<std::size_t>(e_kg.rows()) == bag.size(), "aspect embedding: one KG row per bag entry");
  std::vector<int> src;
  Eigen::VectorXd w(static_cast<Eigen::Index>(bag.size()));
  for (std::size_t k = 0; k < bag.size(); ++k) {
    src.push_back(static_cast<int>(bag[k].source));
    w(static_cast<Eigen::Index>(k)) = opts_.weighting ? aspect_weight(bag[k].num, opts_.rating_max) : 1.0;
  }
  if (weights) weights->assign(w.data(), w.data() + w.size());
  return embed_aspect(e_kg, ad::gather_rows(sources_, src), w);
}

Var AspectNet::contextualize(const Var& e, const nn::RunContext& ctx) const {
  require(e.rows() >= 1, "contextualize: empty aspect sequence");
  return stack_.forward(e, ctx);
}

AspectOutput AspectNet::forward(const Var& query, const Var& e_kg, std::span<const aspects::BagItem> bag,
                                const nn::RunContext& ctx) const {
  AspectOutput out;
  if (bag.empty()) {
    out.pooled = ad::zeros(1, opts_.model_width);
    return out;
  }
  const Var p = contextualize(embed(e_kg, bag, &out.aspect_weights), ctx);
  if (opts_.attention) {
    out.scores = attention_score(query, p, attention_);
    const Matrix s = out.scores.value();
    const double mx = s.maxCoeff();
    const Eigen::ArrayXd e = (s.col(0).array() - mx).exp();
    const Eigen::ArrayXd a = e / e.sum();
    out.pool_weights.assign(a.data(), a.data() + a.size());
    out.pooled = pool_aspects(out.scores, p);
  } else {
    out.pool_weights.assign(bag.size(), 1.0 / static_cast<double>(bag.size()));
    out.pooled = mean_pool(p);
  }
  return out;
}

}  // namespace kcf::aspectnet
