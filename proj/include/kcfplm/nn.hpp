#pragma once

#include "kcfplm/autodiff.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace kcf::nn {

using ad::Matrix;
using ad::Var;

struct Parameter {
  std::string name;
  Var var;
};

// Named registry of every learnable tensor in a model.
class ParameterSet {
 public:
  Var add(std::string name, Matrix init, bool trainable = true);
  const std::vector<Parameter>& entries() const { return entries_; }
  const Parameter* find(const std::string& name) const;
  // Number of scalar values with requires_grad set.
  std::size_t trainable_count() const;
  std::size_t total_count() const;
  void zero_grad();
  // Freezes or unfreezes every parameter whose name starts with prefix.
  void set_trainable(const std::string& prefix, bool trainable);
  std::vector<Matrix> snapshot() const;
  void restore(const std::vector<Matrix>& values);

 private:
  std::vector<Parameter> entries_;
};

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng);
Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng);

// Training flag and dropout randomness for one forward pass.
struct RunContext {
  bool training = false;
  std::mt19937_64* rng = nullptr;
  double dropout = 0.0;

  Var drop(const Var& x) const {
    return (training && rng != nullptr) ? ad::dropout(x, dropout, *rng) : x;
  }
};

enum class Activation { relu, gelu };

// Row-vector convention: y = x W + b with W stored in x in_features x out_features.
class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet& params, const std::string& name, int in, int out, std::mt19937_64& rng,
         bool trainable = true);
  Var forward(const Var& x) const;
  const Var& weight() const { return weight_; }
  const Var& bias() const { return bias_; }
  int in_features() const { return static_cast<int>(weight_.rows()); }
  int out_features() const { return static_cast<int>(weight_.cols()); }

 private:
  Var weight_;
  Var bias_;
};

// Two-layer perceptron with a rectified hidden layer.
class Mlp2 {
 public:
  Mlp2() = default;
  Mlp2(ParameterSet& params, const std::string& name, int in, int hidden, int out, std::mt19937_64& rng,
       bool trainable = true);
  Var forward(const Var& x) const;
  const Linear& first() const { return first_; }
  const Linear& second() const { return second_; }

 private:
  Linear first_;
  Linear second_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterSet& params, const std::string& name, int width, double eps, bool trainable = true);
  Var forward(const Var& x) const;

 private:
  Var gamma_;
  Var beta_;
  double eps_ = 1e-5;
};

struct TransformerOptions {
  int width = 64;
  int heads = 4;
  int ff_width = 256;
  bool pre_norm = true;
  Activation activation = Activation::relu;
  double ln_eps = 1e-5;
};

// Multi-head self-attention block plus position-wise feed-forward block.
class TransformerLayer {
 public:
  TransformerLayer() = default;
  TransformerLayer(ParameterSet& params, const std::string& name, const TransformerOptions& opts,
                   std::mt19937_64& rng, bool trainable = true);
  Var forward(const Var& x, const RunContext& ctx) const;

 private:
  Var self_attention(const Var& x) const;

  TransformerOptions opts_;
  Linear query_, key_, value_, out_;
  LayerNorm attn_norm_, ff_norm_;
  Linear ff_in_, ff_out_;
};

class TransformerStack {
 public:
  TransformerStack() = default;
  // Pre-norm stacks get a final LayerNorm; post-norm stacks already end in one.
  TransformerStack(ParameterSet& params, const std::string& name, int layers, const TransformerOptions& opts,
                   std::mt19937_64& rng, bool trainable = true);
  Var forward(const Var& x, const RunContext& ctx) const;
  int layers() const { return static_cast<int>(layers_.size()); }

 private:
  std::vector<TransformerLayer> layers_;
  LayerNorm final_norm_;
  bool has_final_norm_ = false;
};

struct AdamOptions {
  double learning_rate = 6e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(const ParameterSet& params, AdamOptions opts);
  // Applies one update from the gradients currently stored on the parameters.
  void step();
  long steps() const { return t_; }

 private:
  const ParameterSet& params_;
  AdamOptions opts_;
  std::vector<Matrix> m_, v_;
  long t_ = 0;
};

}  // namespace kcf::nn
