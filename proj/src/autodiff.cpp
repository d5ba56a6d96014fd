#include "kcfplm/autodiff.hpp"

#include "kcfplm/error.hpp"

#include <cmath>

namespace kcf::ad {

namespace {

thread_local Tape* g_active_tape = nullptr;

bool needs_grad(std::initializer_list<const Var*> parents) {
  if (g_active_tape == nullptr) return false;
  for (const Var* p : parents)
    if (p->requires_grad()) return true;
  return false;
}

// Creates a recorded result node. The backward closure receives the node
// itself so it can read its own value without an ownership cycle.
template <class F>
Var record(Matrix value, F&& make_backward) {
  Var out(std::move(value), true);
  Node* self = out.node().get();
  self->backward = make_backward(self);
  g_active_tape->record(out.node());
  return out;
}

void push(const Var& v, const Matrix& g) {
  if (v.requires_grad()) v.node()->accumulate(g);
}

}  // namespace

Var::Var(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Matrix Var::grad() const {
  if (node_->grad.size() == 0) return Matrix::Zero(rows(), cols());
  return node_->grad;
}

void Tape::backward(const Var& loss) {
  require(loss.rows() == 1 && loss.cols() == 1, "backward expects a scalar loss");
  if (!loss.requires_grad()) return;
  loss.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (n.backward && n.grad.size() != 0) n.backward(n.grad);
  }
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

Var constant(Matrix value) { return Var(std::move(value), false); }
Var zeros(Eigen::Index rows, Eigen::Index cols) { return constant(Matrix::Zero(rows, cols)); }

Var matmul(const Var& a, const Var& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Matrix v = a.value() * b.value();
  if (!needs_grad({&a, &b})) return Var(std::move(v));
  return record(std::move(v), [a, b](Node*) {
    return [a, b](const Matrix& g) {
      if (a.requires_grad()) push(a, g * b.value().transpose());
      if (b.requires_grad()) push(b, a.value().transpose() * g);
    };
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  require(a.cols() == b.cols(), "matmul_nt: inner dimensions differ");
  Matrix v = a.value() * b.value().transpose();
  if (!needs_grad({&a, &b})) return Var(std::move(v));
  return record(std::move(v), [a, b](Node*) {
    return [a, b](const Matrix& g) {
      if (a.requires_grad()) push(a, g * b.value());
      if (b.requires_grad()) push(b, g.transpose() * a.value());
    };
  });
}

Var transpose(const Var& a) {
  Matrix v = a.value().transpose();
  if (!needs_grad({&a})) return Var(std::move(v));
  return record(std::move(v), [a](Node*) {
    return [a](const Matrix& g) { push(a, g.transpose()); };
  });
}

Var add(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  Matrix v = a.value() + b.value();
  if (!needs_grad({&a, &b})) return Var(std::move(v));
  return record(std::move(v), [a, b](Node*) {
    return [a, b](const Matrix& g) {
      push(a, g);
      push(b, g);
    };
  });
}

Var sub(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  Matrix v = a.value() - b.value();
  if (!needs_grad({&a, &b})) return Var(std::move(v));
  return record(std::move(v), [a, b](Node*) {
    return [a, b](const Matrix& g) {
      push(a, g);
      if (b.requires_grad()) push(b, -g);
    };
  });
}

Var mul(const Var& a, const Var& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  Matrix v = a.value().cwiseProduct(b.value());
  if (!needs_grad({&a, &b})) return Var(std::move(v));
  return record(std::move(v), [a, b](Node*) {
    return [a, b](const Matrix& g) {
      if (a.requires_grad()) push(a, g.cwiseProduct(b.value()));
      if (b.requires_grad()) push(b, g.cwiseProduct(a.value()));
    };
  });
}

Var scale(const Var& a, double s) {
  Matrix v = a.value() * s;
  if (!needs_grad({&a})) return Var(std::move(v));
  return record(std::move(v), [a, s](Node*) {
    return [a, s](const Matrix& g) { push(a, g * s); };
  });
}

Var add_row(const Var& a, const Var& row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row: bias shape mismatch");
  Matrix v = a.value().rowwise() + row.value().row(0);
  if (!needs_grad({&a, &row})) return Var(std::move(v));
  return record(std::move(v), [a, row](Node*) {
    return [a, row](const Matrix& g) {
      push(a, g);
      if (row.requires_grad()) push(row, g.colwise().sum());
    };
  });
}

Var scale_rows(const Var& a, const Eigen::VectorXd& factors) {
  require(factors.size() == a.rows(), "scale_rows: factor count mismatch");
  Matrix v = factors.asDiagonal() * a.value();
  if (!needs_grad({&a})) return Var(std::move(v));
  return record(std::move(v), [a, factors](Node*) {
    return [a, factors](const Matrix& g) { push(a, factors.asDiagonal() * g); };
  });
}

Var relu(const Var& a) {
  Matrix v = a.value().cwiseMax(0.0);
  if (!needs_grad({&a})) return Var(std::move(v));
  return record(std::move(v), [a](Node*) {
    return [a](const Matrix& g) {
      push(a, (a.value().array() > 0.0).select(g, 0.0));
    };
  });
}

Var tanh(const Var& a) {
  Matrix v = a.value().array().tanh().matrix();
  if (!needs_grad({&a})) return Var(std::move(v));
  return record(std::move(v), [a](Node* self) {
    return [a, self](const Matrix& g) {
      push(a, (g.array() * (1.0 - self->value.array().square())).matrix());
    };
  });
}

Var gelu(const Var& a) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt2pi = 0.39894228040143267794;
  Matrix v = a.value().unaryExpr([](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); });
  if (!needs_grad({&a})) return Var(std::move(v));
  return record(std::move(v), [a](Node*) {
    return [a](const Matrix& g) {
      Matrix d = a.value().unaryExpr([](double x) {
        return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
      });
      push(a, g.cwiseProduct(d));
    };
  });
}

Var softmax_rows(const Var& a) {
  Matrix v(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double m = a.value().row(r).maxCoeff();
    v.row(r) = (a.value().row(r).array() - m).exp().matrix();
    v.row(r) /= v.row(r).sum();
  }
  if (!needs_grad({&a})) return Var(std::move(v));
  return record(std::move(v), [a](Node* self) {
    return [a, self](const Matrix& g) {
      const Matrix& p = self->value;
      Matrix dot = g.cwiseProduct(p).rowwise().sum();
      Matrix out = p.cwiseProduct(g - dot.replicate(1, g.cols()));
      push(a, out);
    };
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Eigen::Index n = x.cols();
  require(gamma.cols() == n && beta.cols() == n, "layer_norm: parameter width mismatch");
  Matrix xhat(x.rows(), n);
  Eigen::VectorXd inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.value().row(r).mean();
    const double var = (x.value().row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.value().row(r).array() - mu) * inv_std(r);
  }
  Matrix v = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  v.rowwise() += beta.value().row(0);
  if (!needs_grad({&x, &gamma, &beta})) return Var(std::move(v));
  return record(std::move(v), [x, gamma, beta, xhat, inv_std](Node*) {
    return [x, gamma, beta, xhat, inv_std](const Matrix& g) {
      if (gamma.requires_grad()) push(gamma, g.cwiseProduct(xhat).colwise().sum());
      if (beta.requires_grad()) push(beta, g.colwise().sum());
      if (!x.requires_grad()) return;
      Matrix dxhat = (g.array().rowwise() * gamma.value().row(0).array()).matrix();
      Matrix dx(g.rows(), g.cols());
      for (Eigen::Index r = 0; r < g.rows(); ++r) {
        const double m1 = dxhat.row(r).mean();
        const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
        dx.row(r) = ((dxhat.row(r).array() - m1 - xhat.row(r).array() * m2) * inv_std(r)).matrix();
      }
      push(x, dx);
    };
  });
}

Var gather_rows(const Var& table, std::span<const int> rows) {
  Matrix v(static_cast<Eigen::Index>(rows.size()), table.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < table.rows(), "gather_rows: index out of range");
    v.row(static_cast<Eigen::Index>(i)) = table.value().row(rows[i]);
  }
  if (!needs_grad({&table})) return Var(std::move(v));
  std::vector<int> idx(rows.begin(), rows.end());
  return record(std::move(v), [table, idx](Node*) {
    return [table, idx](const Matrix& g) {
      Matrix d = Matrix::Zero(table.rows(), table.cols());
      for (std::size_t i = 0; i < idx.size(); ++i) d.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
      push(table, d);
    };
  });
}

Var concat_cols(const Var& a, const Var& b) {
  require(a.rows() == b.rows(), "concat_cols: row count mismatch");
  Matrix v(a.rows(), a.cols() + b.cols());
  v << a.value(), b.value();
  if (!needs_grad({&a, &b})) return Var(std::move(v));
  return record(std::move(v), [a, b](Node*) {
    return [a, b](const Matrix& g) {
      if (a.requires_grad()) push(a, g.leftCols(a.cols()));
      if (b.requires_grad()) push(b, g.rightCols(b.cols()));
    };
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  Eigen::Index total = 0;
  for (const Var& p : parts) {
    require(p.cols() == parts[0].cols(), "concat_rows: column count mismatch");
    total += p.rows();
  }
  Matrix v(total, parts[0].cols());
  Eigen::Index at = 0;
  bool any_grad = false;
  for (const Var& p : parts) {
    v.middleRows(at, p.rows()) = p.value();
    at += p.rows();
    any_grad = any_grad || p.requires_grad();
  }
  if (g_active_tape == nullptr || !any_grad) return Var(std::move(v));
  std::vector<Var> ps(parts.begin(), parts.end());
  return record(std::move(v), [ps](Node*) {
    return [ps](const Matrix& g) {
      Eigen::Index off = 0;
      for (const Var& p : ps) {
        if (p.requires_grad()) push(p, g.middleRows(off, p.rows()));
        off += p.rows();
      }
    };
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && start + count <= a.cols(), "slice_cols: out of range");
  Matrix v = a.value().middleCols(start, count);
  if (!needs_grad({&a})) return Var(std::move(v));
  return record(std::move(v), [a, start, count](Node*) {
    return [a, start, count](const Matrix& g) {
      Matrix d = Matrix::Zero(a.rows(), a.cols());
      d.middleCols(start, count) = g;
      push(a, d);
    };
  });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && start + count <= a.rows(), "slice_rows: out of range");
  Matrix v = a.value().middleRows(start, count);
  if (!needs_grad({&a})) return Var(std::move(v));
  return record(std::move(v), [a, start, count](Node*) {
    return [a, start, count](const Matrix& g) {
      Matrix d = Matrix::Zero(a.rows(), a.cols());
      d.middleRows(start, count) = g;
      push(a, d);
    };
  });
}

Var mean_rows(const Var& a) {
  require(a.rows() > 0, "mean_rows: empty input");
  Matrix v = a.value().colwise().mean();
  if (!needs_grad({&a})) return Var(std::move(v));
  return record(std::move(v), [a](Node*) {
    return [a](const Matrix& g) {
      push(a, g.replicate(a.rows(), 1) / static_cast<double>(a.rows()));
    };
  });
}

Var sum(const Var& a) {
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  if (!needs_grad({&a})) return Var(std::move(v));
  return record(std::move(v), [a](Node*) {
    return [a](const Matrix& g) { push(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0))); };
  });
}

Var spmm(const Sparse& s, const Var& x) {
  require(s.cols() == x.rows(), "spmm: inner dimensions differ");
  Matrix v = s * x.value();
  if (!needs_grad({&x})) return Var(std::move(v));
  // Own a transposed copy; the caller's matrix may not outlive backward.
  auto st = std::make_shared<Sparse>(s.transpose());
  return record(std::move(v), [x, st](Node*) {
    return [x, st](const Matrix& g) { push(x, *st * g); };
  });
}

Var dropout(const Var& a, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return a;
  std::bernoulli_distribution keep(1.0 - p);
  Matrix mask(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? 1.0 / (1.0 - p) : 0.0;
  Matrix v = a.value().cwiseProduct(mask);
  if (!needs_grad({&a})) return Var(std::move(v));
  return record(std::move(v), [a, mask](Node*) {
    return [a, mask](const Matrix& g) { push(a, g.cwiseProduct(mask)); };
  });
}

Var softmax_cross_entropy(const Var& logits, std::span<const int> labels, double eps,
                          int* clamped_count) {
  const Eigen::Index n = logits.rows();
  require(static_cast<std::size_t>(n) == labels.size(), "softmax_cross_entropy: label count mismatch");
  require(n > 0, "softmax_cross_entropy: empty input");
  Matrix p(n, logits.cols());
  std::vector<bool> clamped(static_cast<std::size_t>(n), false);
  double total = 0.0;
  int clamps = 0;
  const double log_eps = std::log(eps);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double m = logits.value().row(r).maxCoeff();
    p.row(r) = (logits.value().row(r).array() - m).exp().matrix();
    const double z = p.row(r).sum();
    p.row(r) /= z;
    const int y = labels[static_cast<std::size_t>(r)];
    require(y >= 0 && y < logits.cols(), "softmax_cross_entropy: label out of range");
    double lp = logits.value()(r, y) - m - std::log(z);
    if (lp < log_eps) {
      lp = log_eps;
      clamped[static_cast<std::size_t>(r)] = true;
      ++clamps;
    }
    total -= lp;
  }
  if (clamped_count != nullptr) *clamped_count = clamps;
  Matrix v(1, 1);
  v(0, 0) = total / static_cast<double>(n);
  if (!needs_grad({&logits})) return Var(std::move(v));
  std::vector<int> ys(labels.begin(), labels.end());
  return record(std::move(v), [logits, p, ys, clamped](Node*) {
    return [logits, p, ys, clamped](const Matrix& g) {
      Matrix d = p;
      for (std::size_t r = 0; r < ys.size(); ++r) {
        const auto row = static_cast<Eigen::Index>(r);
        if (clamped[r])
          d.row(row).setZero();
        else
          d(row, ys[r]) -= 1.0;
      }
      push(logits, d * (g(0, 0) / static_cast<double>(ys.size())));
    };
  });
}

}  // namespace kcf::ad
