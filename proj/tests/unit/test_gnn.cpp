#include "doctest.h"
#include "gradcheck.hpp"

#include "kcfplm/gnn.hpp"

#include <cmath>
#include <random>

using namespace kcf;
using ad::Matrix;
using ad::Var;
using kg::NodeType;
using kg::Relation;

namespace {

// users u0,u1; items i0,i1; aspects a0,a1
kg::KnowledgeGraph toy_graph() {
  kg::KnowledgeGraph g({"u0", "u1"}, {"i0", "i1"}, {"a0", "a1"});
  g.add_edge(NodeType::user, 0, Relation::purchase, NodeType::item, 0, 1.0);
  g.add_edge(NodeType::user, 0, Relation::purchase, NodeType::item, 1, 1.0);
  g.add_edge(NodeType::user, 1, Relation::purchase, NodeType::item, 1, 1.0);
  g.add_edge(NodeType::item, 0, Relation::item_aspect_good, NodeType::aspect, 0, 0.75);
  g.add_edge(NodeType::item, 0, Relation::item_aspect_bad, NodeType::aspect, 0, 0.25);
  g.add_edge(NodeType::item, 1, Relation::item_aspect_bad, NodeType::aspect, 1, 1.0);
  g.add_edge(NodeType::user, 1, Relation::user_aspect_care, NodeType::aspect, 1, 1.0);
  g.add_edge(NodeType::aspect, 0, Relation::aspect_synonym, NodeType::aspect, 1, 1.0);
  g.add_edge(NodeType::item, 0, Relation::item_also_purchase, NodeType::item, 1, 1.0);
  g.finalize();
  return g;
}

// Loop-by-loop evaluation of one layer straight from the edge list.
Matrix dense_layer(const kg::KnowledgeGraph& g, const Matrix& x, const gnn::RelationalLayerParams& p, bool activate) {
  const int n = g.num_nodes();
  const int d = static_cast<int>(x.cols());
  Matrix out = Matrix::Zero(n, d);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < d; ++c)
      for (int k = 0; k < d; ++k) out(i, c) += x(i, k) * p.self.value()(k, c);
    for (int r = 0; r < kg::kRelationCount; ++r) {
      int count = 0;
      for (const auto& e : g.edges())
        if (static_cast<int>(e.relation) == r && e.dst == i) ++count;
      for (const auto& e : g.edges()) {
        if (static_cast<int>(e.relation) != r || e.dst != i) continue;
        for (int c = 0; c < d; ++c)
          for (int k = 0; k < d; ++k)
            out(i, c) += e.weight / count * x(e.src, k) * p.relation[static_cast<std::size_t>(r)].value()(k, c);
      }
    }
    if (activate)
      for (int c = 0; c < d; ++c) out(i, c) = std::max(0.0, out(i, c));
  }
  return out;
}

}  // namespace

TEST_CASE("graph with no edges keeps only the self term") {
  kg::KnowledgeGraph g({"u"}, {"i"}, {"a"});
  g.finalize();
  const auto adj = gnn::normalized_adjacency(g);
  std::mt19937_64 rng(1);
  nn::ParameterSet ps;
  const auto p = gnn::make_layer_params(ps, "l", 4, rng);
  const Matrix x = nn::normal_matrix(3, 4, 1.0, rng);
  const Matrix got = gnn::relational_layer(adj, ad::constant(x), p).value();
  const Matrix want = (x * p.self.value()).cwiseMax(0.0);
  CHECK((got - want).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single weighted edge with identity transforms") {
  kg::KnowledgeGraph g({"u"}, {"i"}, {});
  g.add_edge(NodeType::user, 0, Relation::purchase, NodeType::item, 0, 0.75);
  g.finalize();
  const auto adj = gnn::normalized_adjacency(g);
  std::mt19937_64 rng(2);
  nn::ParameterSet ps;
  auto p = gnn::make_layer_params(ps, "l", 3, rng);
  for (auto& w : p.relation) w.mutable_value().setIdentity();
  p.self.mutable_value().setIdentity();
  Matrix x(2, 3);
  x << 1, -2, 3, 0.5, 4, -1;
  const Matrix got = gnn::relational_layer(adj, ad::constant(x), p, false).value();
  const Matrix want_item = 0.75 * x.row(0) + x.row(1);
  CHECK((got.row(1) - want_item).norm() < 1e-14);
  // the user receives the inverse edge from the item
  const Matrix want_user = 0.75 * x.row(1) + x.row(0);
  CHECK((got.row(0) - want_user).norm() < 1e-14);
}

TEST_CASE("sparse propagation matches the dense loop oracle") {
  const auto g = toy_graph();
  const auto adj = gnn::normalized_adjacency(g);
  std::mt19937_64 rng(3);
  nn::ParameterSet ps;
  std::vector<gnn::RelationalLayerParams> layers{gnn::make_layer_params(ps, "a", 5, rng),
                                                 gnn::make_layer_params(ps, "b", 5, rng)};
  const Matrix x = nn::normal_matrix(6, 5, 1.0, rng);
  for (bool act : {true, false}) {
    const Matrix got = gnn::propagate(adj, ad::constant(x), layers, act).value();
    const Matrix want = dense_layer(g, dense_layer(g, x, layers[0], act), layers[1], act);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("one layer only sees direct neighbors") {
  const auto g = toy_graph();
  const auto adj = gnn::normalized_adjacency(g);
  std::mt19937_64 rng(4);
  nn::ParameterSet ps;
  const auto p = gnn::make_layer_params(ps, "l", 4, rng);
  const Matrix x = nn::normal_matrix(6, 4, 1.0, rng);
  const Matrix base = gnn::relational_layer(adj, ad::constant(x), p, false).value();
  for (int j = 0; j < 6; ++j) {
    Matrix xp = x;
    xp.row(j).array() += 1.0;
    const Matrix moved = gnn::relational_layer(adj, ad::constant(xp), p, false).value();
    for (int i = 0; i < 6; ++i) {
      bool linked = i == j;
      for (int r = 0; r < kg::kRelationCount; ++r)
        for (const auto& nb : g.incoming(static_cast<Relation>(r), i)) linked = linked || nb.node == j;
      const double change = (moved.row(i) - base.row(i)).norm();
      if (!linked) CHECK(change == 0.0);
    }
  }
}

TEST_CASE("relational term is linear in edge weights") {
  kg::KnowledgeGraph g1({"u0", "u1"}, {"i0"}, {}), g2({"u0", "u1"}, {"i0"}, {});
  g1.add_edge(NodeType::user, 0, Relation::purchase, NodeType::item, 0, 0.2);
  g1.add_edge(NodeType::user, 1, Relation::purchase, NodeType::item, 0, 0.35);
  g2.add_edge(NodeType::user, 0, Relation::purchase, NodeType::item, 0, 0.4);
  g2.add_edge(NodeType::user, 1, Relation::purchase, NodeType::item, 0, 0.7);
  g1.finalize();
  g2.finalize();
  std::mt19937_64 rng(5);
  nn::ParameterSet ps;
  const auto p = gnn::make_layer_params(ps, "l", 3, rng);
  const Matrix x = nn::normal_matrix(3, 3, 1.0, rng);
  const Matrix self = x * p.self.value();
  const Matrix r1 = gnn::relational_layer(gnn::normalized_adjacency(g1), ad::constant(x), p, false).value() - self;
  const Matrix r2 = gnn::relational_layer(gnn::normalized_adjacency(g2), ad::constant(x), p, false).value() - self;
  CHECK((r2 - 2.0 * r1).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("type projections") {
  std::mt19937_64 rng(6);
  nn::ParameterSet ps;
  gnn::GnnOptions opts;
  opts.kg_width = 4;
  opts.model_width = 6;
  gnn::GraphEncoder enc(ps, "kg", 5, opts, rng);
  const Var x = ad::constant(nn::normal_matrix(1, 4, 1.0, rng));
  CHECK((enc.project(x, NodeType::user).value() - enc.project(x, NodeType::item).value()).norm() > 1e-6);
  CHECK(enc.project(x, NodeType::aspect).cols() == 6);

  // hand algebra for the user MLP
  const auto* w0 = ps.find("kg.project_user.0.weight");
  const auto* b0 = ps.find("kg.project_user.0.bias");
  const auto* w1 = ps.find("kg.project_user.1.weight");
  const auto* b1 = ps.find("kg.project_user.1.bias");
  REQUIRE(w0);
  REQUIRE(b1);
  const Matrix h = (x.value() * w0->var.value() + b0->var.value()).cwiseMax(0.0);
  const Matrix want = h * w1->var.value() + b1->var.value();
  CHECK((enc.project(x, NodeType::user).value() - want).norm() < 1e-12);

  for (const char* n : {"kg.project_item.0.bias", "kg.project_item.1.bias"})
  {
    Var bias = ps.find(n)->var;
    bias.mutable_value().setZero();
  }
  CHECK(enc.project(ad::zeros(2, 4), NodeType::item).value().norm() == 0.0);
}

TEST_CASE("node type probabilities") {
  std::mt19937_64 rng(7);
  nn::ParameterSet ps;
  gnn::GnnOptions opts;
  opts.kg_width = 4;
  opts.model_width = 8;
  gnn::GraphEncoder enc(ps, "kg", 5, opts, rng);
  const Matrix p = enc.type_probs(ad::constant(nn::normal_matrix(50, 4, 3.0, rng))).value();
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    CHECK(std::abs(p.row(r).sum() - 1.0) < 1e-6);
    CHECK(p.row(r).minCoeff() >= 0.0);
  }

  const Matrix uniform = ad::softmax_rows(ad::zeros(1, 3)).value();
  for (int k = 0; k < 3; ++k) CHECK(uniform(0, k) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  Matrix logits(1, 3);
  logits << 1, 2, 3;
  const Matrix s = ad::softmax_rows(ad::constant(logits)).value();
  long double z = std::exp(1.0L) + std::exp(2.0L) + std::exp(3.0L);
  for (int k = 0; k < 3; ++k) CHECK(std::abs(s(0, k) - static_cast<double>(std::exp(k + 1.0L) / z)) < 1e-15);
}

TEST_CASE("node type loss") {
  std::vector<int> labels{0, 1, 2, 2, 1, 0};
  SUBCASE("uniform predictions give ln 3") {
    const auto r = gnn::node_type_loss(ad::zeros(6, 3), labels);
    CHECK(r.loss.scalar() == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  }
  SUBCASE("confident correct predictions approach zero") {
    Matrix l = Matrix::Zero(6, 3);
    for (int v = 0; v < 6; ++v) l(v, labels[static_cast<std::size_t>(v)]) = 60.0;
    CHECK(gnn::node_type_loss(ad::constant(l), labels).loss.scalar() < 1e-20);
  }
  SUBCASE("zero probability at the true class is clamped and counted") {
    Matrix l = Matrix::Zero(6, 3);
    l(0, 1) = 1e4;
    const auto r = gnn::node_type_loss(ad::constant(l), labels);
    CHECK(r.clamped == 1);
    CHECK(std::isfinite(r.loss.scalar()));
  }
  SUBCASE("random fixture against a scalar loop") {
    std::mt19937_64 rng(8);
    const Matrix l = nn::normal_matrix(6, 3, 2.0, rng);
    double want = 0;
    for (int v = 0; v < 6; ++v) {
      double z = 0;
      for (int k = 0; k < 3; ++k) z += std::exp(l(v, k));
      want -= std::log(std::exp(l(v, labels[static_cast<std::size_t>(v)])) / z);
    }
    want /= 6;
    CHECK(std::abs(gnn::node_type_loss(ad::constant(l), labels).loss.scalar() - want) < 1e-7);
    // sampled variant over a subset of nodes
    std::vector<int> rows{1, 4};
    double sub = 0;
    for (int v : rows) {
      double z = 0;
      for (int k = 0; k < 3; ++k) z += std::exp(l(v, k));
      sub -= std::log(std::exp(l(v, labels[static_cast<std::size_t>(v)])) / z);
    }
    CHECK(std::abs(gnn::node_type_loss(ad::constant(l), labels, rows).loss.scalar() - sub / 2) < 1e-7);
  }
}

TEST_CASE("node type loss gradients match finite differences") {
  const auto g = toy_graph();
  const auto adj = gnn::normalized_adjacency(g);
  const auto labels = gnn::node_type_labels(g);
  std::mt19937_64 rng(9);
  nn::ParameterSet ps;
  gnn::GnnOptions opts;
  opts.kg_width = 4;
  opts.model_width = 5;
  opts.init_stddev = 0.5;
  gnn::GraphEncoder enc(ps, "kg", g.num_nodes(), opts, rng);
  auto loss = [&] { return gnn::node_type_loss(enc.type_logits(enc.propagate(adj)), labels).loss; };
  std::vector<Var> params{enc.layer(0).self, enc.embeddings()};
  for (const auto& w : enc.layer(0).relation) params.push_back(w);
  for (const Var& p : params) {
    const Matrix a = testing::analytic_grad(loss, p);
    const Matrix n = testing::numeric_grad(p, [&] { return loss().scalar(); });
    INFO("norms " << a.norm() << " " << n.norm());
    CHECK(testing::relative_error(a, n) < 1e-4);
  }
}
