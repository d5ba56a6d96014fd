#include "kcfplm/nn.hpp"

#include "kcfplm/error.hpp"

#include <cmath>

namespace kcf::nn {

Var ParameterSet::add(std::string name, Matrix init, bool trainable) {
  require(find(name) == nullptr, "duplicate parameter name: " + name);
  Var v(std::move(init), trainable);
  entries_.push_back({std::move(name), v});
  return v;
}

const Parameter* ParameterSet::find(const std::string& name) const {
  for (const auto& p : entries_)
    if (p.name == name) return &p;
  return nullptr;
}

std::size_t ParameterSet::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : entries_)
    if (p.var.requires_grad()) n += static_cast<std::size_t>(p.var.value().size());
  return n;
}

std::size_t ParameterSet::total_count() const {
  std::size_t n = 0;
  for (const auto& p : entries_) n += static_cast<std::size_t>(p.var.value().size());
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : entries_) p.var.zero_grad();
}

void ParameterSet::set_trainable(const std::string& prefix, bool trainable) {
  for (auto& p : entries_)
    if (p.name.rfind(prefix, 0) == 0) p.var.set_requires_grad(trainable);
}

std::vector<Matrix> ParameterSet::snapshot() const {
  std::vector<Matrix> out;
  out.reserve(entries_.size());
  for (const auto& p : entries_) out.push_back(p.var.value());
  return out;
}

void ParameterSet::restore(const std::vector<Matrix>& values) {
  require(values.size() == entries_.size(), "restore: parameter count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) entries_[i].var.mutable_value() = values[i];
}

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Linear::Linear(ParameterSet& params, const std::string& name, int in, int out, std::mt19937_64& rng,
               bool trainable) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight_ = params.add(name + ".weight", uniform_matrix(in, out, bound, rng), trainable);
  bias_ = params.add(name + ".bias", uniform_matrix(1, out, bound, rng), trainable);
}

Var Linear::forward(const Var& x) const { return ad::add_row(ad::matmul(x, weight_), bias_); }

Mlp2::Mlp2(ParameterSet& params, const std::string& name, int in, int hidden, int out, std::mt19937_64& rng,
           bool trainable)
    : first_(params, name + ".0", in, hidden, rng, trainable),
      second_(params, name + ".1", hidden, out, rng, trainable) {}

Var Mlp2::forward(const Var& x) const { return second_.forward(ad::relu(first_.forward(x))); }

LayerNorm::LayerNorm(ParameterSet& params, const std::string& name, int width, double eps, bool trainable)
    : eps_(eps) {
  gamma_ = params.add(name + ".gamma", Matrix::Ones(1, width), trainable);
  beta_ = params.add(name + ".beta", Matrix::Zero(1, width), trainable);
}

Var LayerNorm::forward(const Var& x) const { return ad::layer_norm(x, gamma_, beta_, eps_); }

TransformerLayer::TransformerLayer(ParameterSet& params, const std::string& name, const TransformerOptions& opts,
                                   std::mt19937_64& rng, bool trainable)
    : opts_(opts) {
  require(opts.width % opts.heads == 0, "transformer width must be divisible by head count");
  query_ = Linear(params, name + ".attn.query", opts.width, opts.width, rng, trainable);
  key_ = Linear(params, name + ".attn.key", opts.width, opts.width, rng, trainable);
  value_ = Linear(params, name + ".attn.value", opts.width, opts.width, rng, trainable);
  out_ = Linear(params, name + ".attn.out", opts.width, opts.width, rng, trainable);
  attn_norm_ = LayerNorm(params, name + ".attn_norm", opts.width, opts.ln_eps, trainable);
  ff_in_ = Linear(params, name + ".ff.in", opts.width, opts.ff_width, rng, trainable);
  ff_out_ = Linear(params, name + ".ff.out", opts.ff_width, opts.width, rng, trainable);
  ff_norm_ = LayerNorm(params, name + ".ff_norm", opts.width, opts.ln_eps, trainable);
}

Var TransformerLayer::self_attention(const Var& x) const {
  const Var q = query_.forward(x);
  const Var k = key_.forward(x);
  const Var v = value_.forward(x);
  const int head_dim = opts_.width / opts_.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  Var merged;
  for (int h = 0; h < opts_.heads; ++h) {
    const Var qh = ad::slice_cols(q, h * head_dim, head_dim);
    const Var kh = ad::slice_cols(k, h * head_dim, head_dim);
    const Var vh = ad::slice_cols(v, h * head_dim, head_dim);
    const Var attn = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), scale));
    const Var head = ad::matmul(attn, vh);
    merged = merged.defined() ? ad::concat_cols(merged, head) : head;
  }
  return out_.forward(merged);
}

Var TransformerLayer::forward(const Var& x, const RunContext& ctx) const {
  auto feed_forward = [&](const Var& h) {
    const Var inner = ff_in_.forward(h);
    return ff_out_.forward(opts_.activation == Activation::gelu ? ad::gelu(inner) : ad::relu(inner));
  };
  if (opts_.pre_norm) {
    const Var h = ad::add(x, ctx.drop(self_attention(attn_norm_.forward(x))));
    return ad::add(h, ctx.drop(feed_forward(ff_norm_.forward(h))));
  }
  const Var h = attn_norm_.forward(ad::add(x, ctx.drop(self_attention(x))));
  return ff_norm_.forward(ad::add(h, ctx.drop(feed_forward(h))));
}

TransformerStack::TransformerStack(ParameterSet& params, const std::string& name, int layers,
                                   const TransformerOptions& opts, std::mt19937_64& rng, bool trainable) {
  for (int l = 0; l < layers; ++l)
    layers_.emplace_back(params, name + ".layer" + std::to_string(l), opts, rng, trainable);
  if (opts.pre_norm) {
    final_norm_ = LayerNorm(params, name + ".final_norm", opts.width, opts.ln_eps, trainable);
    has_final_norm_ = true;
  }
}

Var TransformerStack::forward(const Var& x, const RunContext& ctx) const {
  Var h = x;
  for (const auto& layer : layers_) h = layer.forward(h, ctx);
  return has_final_norm_ ? final_norm_.forward(h) : h;
}

Adam::Adam(const ParameterSet& params, AdamOptions opts) : params_(params), opts_(opts) {
  for (const auto& p : params_.entries()) {
    m_.push_back(Matrix::Zero(p.var.rows(), p.var.cols()));
    v_.push_back(Matrix::Zero(p.var.rows(), p.var.cols()));
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  const auto& entries = params_.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Var var = entries[i].var;
    if (!var.requires_grad() || var.node()->grad.size() == 0) continue;
    const Matrix& g = var.node()->grad;
    m_[i] = opts_.beta1 * m_[i] + (1.0 - opts_.beta1) * g;
    v_[i] = opts_.beta2 * v_[i] + (1.0 - opts_.beta2) * g.cwiseAbs2();
    var.mutable_value().array() -=
        opts_.learning_rate * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + opts_.eps);
  }
}

}  // namespace kcf::nn
