#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. Operations record onto the thread's active Tape; with no tape
// active they only compute values, which is what evaluation mode uses.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace kcf::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Sparse = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::function<void(const Matrix&)> backward;

  void accumulate(const Matrix& g) {
    if (grad.size() == 0)
      grad = g;
    else
      grad += g;
  }
  void zero_grad() { grad.resize(0, 0); }
};

class Var {
 public:
  Var() = default;
  explicit Var(Matrix value, bool requires_grad = false);

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  // Gradient after Tape::backward; a zero matrix if nothing flowed here.
  Matrix grad() const;
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() { node_->zero_grad(); }

  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double scalar() const { return node_->value(0, 0); }
  bool defined() const { return static_cast<bool>(node_); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

class Tape {
 public:
  void record(std::shared_ptr<Node> node) { nodes_.push_back(std::move(node)); }
  // Seeds d(loss)/d(loss) = 1 and runs every recorded backward in reverse.
  void backward(const Var& loss);
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::shared_ptr<Node>> nodes_;
};

// Installs a tape as the thread's active tape for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

Var constant(Matrix value);
Var zeros(Eigen::Index rows, Eigen::Index cols);

Var matmul(const Var& a, const Var& b);
// a * b^T
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
// Adds a 1 x n row to every row of a.
Var add_row(const Var& a, const Var& row);
// Multiplies row r of a by factors[r].
Var scale_rows(const Var& a, const Eigen::VectorXd& factors);
Var relu(const Var& a);
Var tanh(const Var& a);
Var gelu(const Var& a);
Var softmax_rows(const Var& a);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps);
Var gather_rows(const Var& table, std::span<const int> rows);
Var concat_cols(const Var& a, const Var& b);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var mean_rows(const Var& a);
Var sum(const Var& a);
Var spmm(const Sparse& s, const Var& x);
// Inverted dropout; identity when p == 0.
Var dropout(const Var& a, double p, std::mt19937_64& rng);

// Mean cross-entropy of row-wise softmax(logits) against integer labels.
// log(p) is clamped at log(eps); clamped_count receives how many rows hit it.
Var softmax_cross_entropy(const Var& logits, std::span<const int> labels, double eps = 1e-12,
                          int* clamped_count = nullptr);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }

}  // namespace kcf::ad
