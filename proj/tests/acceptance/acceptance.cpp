// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Pass criterion numbers as arguments to run a subset.

#include "gradcheck.hpp"
#include "leakage_oracle.hpp"
#include "pipeline.hpp"

#include "kcfplm/aspectnet.hpp"
#include "kcfplm/gnn.hpp"
#include "kcfplm/harness.hpp"
#include "kcfplm/kgraph.hpp"
#include "kcfplm/predictor.hpp"
#include "kcfplm/session.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace kcf;
using ad::Matrix;
using ad::Var;
using corpus::SplitName;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// ---------------------------------------------------------------- 1
Outcome aspect_weight_formula() {
  Outcome o;
  auto oracle = [](int num, int r) {
    const long double s = 1.0L / (1.0L + std::exp(-static_cast<long double>(num)));
    return static_cast<double>(1.0L + (r - 1) * (2.0L * s - 1.0L));
  };
  o.require(aspectnet::aspect_weight(0, 5) == 1.0, "aspect_weight(0,5) != 1");
  const double w1 = aspectnet::aspect_weight(1, 5);
  o.require(std::abs(w1 - oracle(1, 5)) < 1e-5, fmt("aspect_weight(1,5)=%.9f vs oracle %.9f", w1, oracle(1, 5)));
  o.require(std::abs(w1 - 2.848469) < 1e-5, fmt("aspect_weight(1,5)=%.9f, expected 2.848469", w1));
  double prev = 1.0, worst = 0;
  for (int n = 1; n <= 200; ++n) {
    const double w = aspectnet::aspect_weight(n, 5);
    worst = std::max(worst, std::abs(w - oracle(n, 5)));
    // Beyond n = 36 successive values differ by less than one ulp near 5.
    if (n <= 36) o.require(w > prev, fmt("not strictly increasing at num=%g", n));
    o.require(w >= prev && w < 5.0, fmt("outside [prev, 5) at num=%g", n));
    prev = w;
  }
  o.require(worst < 1e-12, fmt("max deviation from oracle %.3g", worst));
  o.require(5.0 - aspectnet::aspect_weight(1000, 5) < 1e-12, "supremum is not 5");
  if (o.pass)
    o.detail = fmt("w(1,5)=%.6f, strictly increasing for num<=36 (double resolution), sup 5, max oracle dev %.1e", w1,
                   worst);
  return o;
}

// ---------------------------------------------------------------- 2
Outcome edge_weight_normalization() {
  Outcome o;
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> count(0, 500);
  int n = 0;
  while (n < 1000) {
    const int p = count(rng), q = count(rng);
    if (p + q < 1) continue;
    ++n;
    const auto w = kg::compute_polarity_weights(p, q);
    o.require(w.good + w.bad == 1.0, fmt("w_good + w_bad != 1 for (%g, %g)", p, q));
    o.require(w.good >= 0 && w.good <= 1 && w.bad >= 0 && w.bad <= 1, fmt("weight outside [0,1] for (%g, %g)", p, q));
  }
  if (o.pass) o.detail = "1000 random (n_P, n_N): sums exactly 1, all in [0,1]";
  return o;
}

// ---------------------------------------------------------------- 3
Outcome propagation_oracle() {
  Outcome o;
  using kg::NodeType;
  using kg::Relation;
  kg::KnowledgeGraph g({"u0", "u1"}, {"i0", "i1"}, {"a0", "a1"});
  g.add_edge(NodeType::user, 0, Relation::purchase, NodeType::item, 0, 1.0);
  g.add_edge(NodeType::user, 0, Relation::purchase, NodeType::item, 1, 1.0);
  g.add_edge(NodeType::user, 1, Relation::purchase, NodeType::item, 1, 1.0);
  g.add_edge(NodeType::item, 0, Relation::item_aspect_good, NodeType::aspect, 0, 0.6);
  g.add_edge(NodeType::item, 1, Relation::item_aspect_good, NodeType::aspect, 0, 0.3);
  g.add_edge(NodeType::item, 1, Relation::item_aspect_good, NodeType::aspect, 1, 1.0);
  g.add_edge(NodeType::aspect, 0, Relation::aspect_synonym, NodeType::aspect, 1, 0.9);
  g.finalize();
  const int n = g.num_nodes();
  std::set<kg::Relation> used;
  for (const auto& e : g.edges()) used.insert(e.relation);

  // Dense reference: A_r[i][j] = w / |N_i^r| straight from the edge list.
  std::vector<Matrix> dense(kg::kRelationCount, Matrix::Zero(n, n));
  for (int r = 0; r < kg::kRelationCount; ++r) {
    std::vector<int> indegree(static_cast<std::size_t>(n), 0);
    for (const auto& e : g.edges())
      if (static_cast<int>(e.relation) == r) ++indegree[static_cast<std::size_t>(e.dst)];
    for (const auto& e : g.edges())
      if (static_cast<int>(e.relation) == r)
        dense[static_cast<std::size_t>(r)](e.dst, e.src) += e.weight / indegree[static_cast<std::size_t>(e.dst)];
  }
  const auto adj = gnn::normalized_adjacency(g);
  std::mt19937_64 rng(3);
  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    nn::ParameterSet ps;
    auto p = gnn::make_layer_params(ps, "l", 5, rng);
    for (auto& w : p.relation) w.mutable_value() = nn::normal_matrix(5, 5, 1.0, rng);
    p.self.mutable_value() = nn::normal_matrix(5, 5, 1.0, rng);
    const Matrix x = nn::normal_matrix(n, 5, 1.0, rng);
    Matrix want = x * p.self.value();
    for (int r = 0; r < kg::kRelationCount; ++r)
      want += dense[static_cast<std::size_t>(r)] * x * p.relation[static_cast<std::size_t>(r)].value();
    want = want.cwiseMax(0.0);
    const Matrix got = gnn::relational_layer(adj, ad::constant(x), p).value();
    worst = std::max(worst, (got - want).cwiseAbs().maxCoeff());
  }
  o.require(worst < 1e-5, fmt("max deviation %.3g", worst));
  if (o.pass)
    o.detail = fmt("6 nodes, 3 relations (%g edge types with inverses), 20 draws, max deviation %.1e",
                   static_cast<double>(used.size()), worst);
  return o;
}

// ---------------------------------------------------------------- 4
Outcome fm_equivalence() {
  Outcome o;
  std::mt19937_64 rng(4);
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    nn::ParameterSet ps;
    auto fm = predictor::make_fm(ps, "fm", 16, 10, rng);
    fm.bias.mutable_value()(0, 0) = nn::normal_matrix(1, 1, 1.0, rng)(0, 0);
    fm.linear.mutable_value() = nn::normal_matrix(16, 1, 1.0, rng);
    fm.factors.mutable_value() = nn::normal_matrix(16, 10, 0.5, rng);
    const Matrix z = nn::normal_matrix(1, 16, 1.0, rng);
    const Matrix& v = fm.factors.value();
    double slow = fm.bias.value()(0, 0);
    for (int i = 0; i < 16; ++i) {
      slow += fm.linear.value()(i, 0) * z(0, i);
      for (int j = i + 1; j < 16; ++j) slow += v.row(i).dot(v.row(j)) * z(0, i) * z(0, j);
    }
    worst = std::max(worst, std::abs(predictor::fm_predict(ad::constant(z), fm).value()(0, 0) - slow));
  }
  o.require(worst < 1e-6, fmt("fast vs pairwise FM deviation %.3g", worst));

  nn::ParameterSet ps;
  auto fm = predictor::make_fm(ps, "fm", 16, 10, rng);
  fm.factors.mutable_value() = nn::normal_matrix(16, 10, 0.5, rng);
  Var z = ad::constant(nn::normal_matrix(4, 16, 1.0, rng));
  z.set_requires_grad(true);
  Eigen::VectorXd y(4);
  y << 1, 5, 3, 4;
  auto loss = [&] { return predictor::mse_loss(predictor::fm_predict(z, fm), y); };
  double grad_worst = 0;
  for (Var p : {fm.bias, fm.linear, fm.factors, z}) {
    const Matrix a = testing::analytic_grad(loss, p);
    const Matrix num = testing::numeric_grad(p, [&] { return loss().value()(0, 0); });
    grad_worst = std::max(grad_worst, testing::relative_error(a, num));
  }
  o.require(grad_worst < 1e-4, fmt("FM gradient relative error %.3g", grad_worst));
  if (o.pass) o.detail = fmt("100 fixtures max deviation %.1e; gradient relative error %.1e", worst, grad_worst);
  return o;
}

// Fixture corpus prepared once for criteria 5, 6, 9 and 10.
struct FixtureRun {
  std::string dir = testing::scratch_dir("acceptance_fixture");
  config::Config cfg = testing::fixture_config(dir);
  session::Session session{cfg};
  const data::Dataset& d = session.dataset();
  ~FixtureRun() { std::filesystem::remove_all(dir); }
};

FixtureRun& fixture() {
  static FixtureRun f;
  return f;
}

// ---------------------------------------------------------------- 5
Outcome attention_invariants() {
  Outcome o;
  std::mt19937_64 rng(5);
  aspectnet::AspectNetOptions a;
  a.model_width = 8;
  a.layers = 2;
  a.heads = 2;
  a.init_stddev = 0.5;
  nn::ParameterSet ps;
  aspectnet::AspectNet net(ps, "asp", a, rng);
  double sum_worst = 0, shift_worst = 0;
  for (int t = 0; t < 50; ++t) {
    const int n = 1 + static_cast<int>(rng() % 12);
    std::vector<aspects::BagItem> bag;
    for (int k = 0; k < n; ++k) bag.push_back({k, static_cast<aspects::Source>(rng() % 3), 1 + static_cast<int>(rng() % 9)});
    const auto out = net.forward(ad::constant(nn::normal_matrix(1, 16, 1.0, rng)),
                                 ad::constant(nn::normal_matrix(n, 8, 1.0, rng)), bag, {});
    sum_worst = std::max(sum_worst, std::abs(std::accumulate(out.pool_weights.begin(), out.pool_weights.end(), 0.0) - 1));

    const Matrix s = nn::normal_matrix(n, 1, 3.0, rng), p = nn::normal_matrix(n, 8, 1.0, rng);
    const Matrix base = aspectnet::pool_aspects(ad::constant(s), ad::constant(p)).value();
    const double c = nn::normal_matrix(1, 1, 50.0, rng)(0, 0);
    const Matrix shifted = aspectnet::pool_aspects(ad::constant((s.array() + c).matrix()), ad::constant(p)).value();
    shift_worst = std::max(shift_worst, (shifted - base).cwiseAbs().maxCoeff());
  }
  o.require(sum_worst < 1e-6, fmt("pooling weights sum off by %.3g", sum_worst));
  o.require(shift_worst < 1e-6, fmt("score shift changed pooled output by %.3g", shift_worst));

  // End to end: the full model's rating for one pair under bag permutations.
  auto& f = fixture();
  auto opts = harness::model_options(f.cfg, f.d);
  model::Model m(opts, f.d.graph(), 5);
  const data::Example* widest = nullptr;
  for (const auto& e : f.d.examples(SplitName::train))
    if (!widest || e.bag.items.size() > widest->bag.items.size()) widest = &e;
  const double y = m.predict(std::span(widest, 1)).at(0);
  double perm_worst = 0;
  for (int t = 0; t < 50; ++t) {
    auto e = *widest;
    std::shuffle(e.bag.items.begin(), e.bag.items.end(), rng);
    perm_worst = std::max(perm_worst, std::abs(m.predict(std::span(&e, 1)).at(0) - y));
  }
  o.require(widest->bag.items.size() >= 3, "fixture bag too small to permute");
  o.require(perm_worst < 1e-6, fmt("prediction changed by %.3g under bag permutation", perm_worst));
  if (o.pass)
    o.detail = fmt("weight-sum dev %.1e, shift dev %.1e, 50 permutations of a %g-aspect bag dev %.1e", sum_worst,
                   shift_worst, static_cast<double>(widest->bag.items.size()), perm_worst);
  return o;
}

// ---------------------------------------------------------------- 6
Outcome gradient_integrity() {
  Outcome o;
  auto& f = fixture();
  model::Model m(harness::model_options(f.cfg, f.d), f.d.graph(), 6);
  const auto& train = f.d.examples(SplitName::train);
  std::vector<const data::Example*> batch;
  Eigen::VectorXd truth(10);
  for (int k = 0; k < 10; ++k) {
    batch.push_back(&train.at(static_cast<std::size_t>(k)));
    truth(k) = batch.back()->rating;
  }
  const nn::RunContext ctx{true, nullptr, 0.0};
  auto loss = [&] {
    auto out = m.forward(batch, ctx);
    return predictor::hybrid_loss(predictor::mse_loss(out.predictions, truth), out.type_loss, 0.2);
  };
  double worst = 0;
  int groups = 0;
  std::string worst_name;
  for (const auto& p : m.params().entries()) {
    const bool wanted = p.name.rfind("aspect.attention.", 0) == 0 || p.name == "aspect.source_embedding" ||
                        (p.name.rfind("kg.", 0) == 0 && p.name.find(".W_") != std::string::npos);
    if (!wanted) continue;
    ++groups;
    const Matrix a = testing::analytic_grad(loss, p.var);
    const Matrix n = testing::numeric_grad(p.var, [&] { return loss().value()(0, 0); });
    o.require(a.norm() > 0, p.name + " has a zero gradient");
    const double e = testing::relative_error(a, n);
    if (e > worst) {
      worst = e;
      worst_name = p.name;
    }
  }
  o.require(m.forward(batch, ctx).type_loss.defined(), "node-type loss missing from the hybrid loss");
  o.require(worst < 1e-3, fmt("relative error %.3g", worst) + " in " + worst_name);
  if (o.pass) o.detail = fmt("%g parameter tensors, 10 pairs, alpha 0.2, max relative error %.1e", groups, worst);
  return o;
}

// ---------------------------------------------------------------- 7
Outcome overfit_capacity() {
  Outcome o;
  const auto dir = testing::scratch_dir("acceptance_overfit");
  const std::string ini =
      "[data]\nsource = synthetic\nmax_doc_tokens = 32\n"
      "[synthetic]\ninteractions = 200\n"
      "[model]\nd_model = 32\nd_kg = 32\ntransformer_layers = 2\nencoder_layers = 1\ndropout = 0\n"
      "[train]\nlearning_rate = 3e-3\nmax_epochs = 200\nearly_stopping = false\ntarget_train_mse = 0.05\n"
      "track_train_mse = true\n"
      "[run]\ndir = " + dir + "\n";
  auto run = [&] {
    session::Session s(config::parse(ini));
    s.ingest();
    auto r = s.train();
    return std::make_pair(r, s.evaluate(SplitName::train).mse);
  };
  const auto [a, mse_a] = run();
  const auto [b, mse_b] = run();
  std::filesystem::remove_all(dir);
  o.require(a.reached_target, fmt("train MSE %.4f after %g epochs", *a.history.back().train_mse,
                                  static_cast<double>(a.history.size())));
  o.require(mse_a < 0.05, fmt("evaluated train MSE %.4f", mse_a));
  bool same = a.history.size() == b.history.size() && mse_a == mse_b;
  for (std::size_t k = 0; same && k < a.history.size(); ++k)
    same = a.history[k].train_loss == b.history[k].train_loss &&
           a.history[k].validation_mse == b.history[k].validation_mse && a.history[k].train_mse == b.history[k].train_mse;
  o.require(same, "repeated run produced different metrics");
  if (o.pass)
    o.detail = fmt("train MSE %.4f at epoch %g; repeat run bitwise equal over %g epochs", mse_a,
                   static_cast<double>(a.history.size()), static_cast<double>(b.history.size()));
  return o;
}

// ---------------------------------------------------------------- 8
Outcome directional_ablations() {
  Outcome o;
  const auto dir = testing::scratch_dir("acceptance_ablation");
  const auto cfg = config::load(std::string(KCF_SOURCE_DIR) + "/configs/synthetic.ini", {"run.dir=" + dir});
  session::Session s(cfg);
  s.ingest();
  const auto results = s.ablate({"full", "wo_aspect_transformer", "wo_kg"});
  const double full = results[0].mean, wo_asp = results[1].mean, wo_kg = results[2].mean;
  o.require(full < wo_asp, fmt("full %.4f !< wo_aspect_transformer %.4f", full, wo_asp));
  o.require(full < wo_kg, fmt("full %.4f !< wo_kg %.4f", full, wo_kg));

  const auto& d = s.dataset();
  const auto ww = harness::run_variant(cfg, d, "wo_weight", {cfg.train.seeds.front()});
  const auto& wr = ww.runs.front();
  o.require(wr.min_aspect_weight == 1.0 && wr.max_aspect_weight == 1.0,
            fmt("wo_weight saw w_a in [%.6f, %.6f]", wr.min_aspect_weight, wr.max_aspect_weight));

  // wo_attention: pooled vector equals the plain mean of the contextualized rows.
  aspectnet::AspectNetOptions a;
  a.model_width = cfg.model.d_model;
  a.layers = cfg.model.transformer_layers;
  a.heads = cfg.model.transformer_heads;
  a.attention = false;
  std::mt19937_64 rng(8);
  nn::ParameterSet ps;
  aspectnet::AspectNet net(ps, "asp", a, rng);
  double mean_worst = 0;
  for (const auto& e : d.examples(SplitName::test)) {
    if (e.bag.items.empty()) continue;
    const auto n = static_cast<Eigen::Index>(e.bag.items.size());
    const Var kg_rows = ad::constant(nn::normal_matrix(n, a.model_width, 1.0, rng));
    const Var q = ad::constant(nn::normal_matrix(1, 2 * a.model_width, 1.0, rng));
    const auto out = net.forward(q, kg_rows, e.bag.items, {});
    const Matrix ctx = net.contextualize(net.embed(kg_rows, e.bag.items), {}).value();
    mean_worst = std::max(mean_worst, (out.pooled.value() - ctx.colwise().mean()).cwiseAbs().maxCoeff());
  }
  model::ModelOptions mo = harness::model_options(cfg, d);
  model::apply_variant(mo, "wo_attention");
  model::Model m(mo, d.graph(), 1);
  const auto& test = d.examples(SplitName::test);
  std::vector<const data::Example*> batch;
  for (std::size_t k = 0; k < std::min<std::size_t>(32, test.size()); ++k) batch.push_back(&test[k]);
  for (const auto& out : m.forward(batch, {}).aspects)
    for (double w : out.pool_weights)
      mean_worst = std::max(mean_worst, std::abs(w - 1.0 / static_cast<double>(out.pool_weights.size())));
  o.require(mean_worst < 1e-6, fmt("wo_attention pooling differs from the mean by %.3g", mean_worst));
  std::filesystem::remove_all(dir);

  std::ostringstream detail;
  detail << "mean test MSE over seeds";
  for (const auto& r : results) detail << " " << r.variant << fmt("=%.4f+-%.4f", r.mean, r.stddev);
  detail << "; wo_weight w_a=1; wo_attention mean-pool dev " << fmt("%.1e", mean_worst);
  if (o.pass) o.detail = detail.str();
  else o.detail += " (" + detail.str() + ")";
  return o;
}

// ---------------------------------------------------------------- 9
Outcome bucketed_evaluation() {
  Outcome o;
  auto& f = fixture();
  const std::vector<std::string> labels{"0", "[1,12)", "[12,24)", "[24,36)", "[36,inf)"};
  model::Model m(harness::model_options(f.cfg, f.d), f.d.graph(), 9);
  auto check = [&](const harness::EvalReport& r, std::size_t n, const std::string& what) {
    std::vector<std::string> got;
    std::size_t total = 0;
    for (const auto& b : r.buckets) {
      got.push_back(b.label);
      total += b.count;
    }
    o.require(got == labels, what + ": bucket labels differ");
    o.require(total == n && r.count == n, what + ": bucket counts do not sum to the split size");
  };
  for (auto s : {SplitName::train, SplitName::validation, SplitName::test})
    check(harness::evaluate(m, f.d, s), f.d.splits().get(s).size(), corpus::to_string(s));

  // Bag sizes straddling every boundary land in their interval.
  std::vector<data::Example> ex;
  const std::vector<int> sizes{0, 1, 11, 12, 23, 24, 35, 36, 500};
  const std::vector<std::size_t> want{0, 1, 1, 2, 2, 3, 3, 4, 4};
  for (int n : sizes) {
    auto e = f.d.examples(SplitName::test).front();
    e.bag.untruncated_size = n;
    ex.push_back(e);
  }
  const auto r = harness::score(f.d, ex, std::vector<double>(ex.size(), 3.0), "boundary");
  check(r, ex.size(), "boundary");
  std::vector<std::size_t> counts(5, 0);
  for (std::size_t k = 0; k < sizes.size(); ++k) ++counts[want[k]];
  for (std::size_t b = 0; b < 5; ++b) o.require(r.buckets[b].count == counts[b], "boundary bag in the wrong bucket");
  if (o.pass) o.detail = "five buckets on every split, counts sum to split size, boundaries 0/1/12/24/36 placed";
  return o;
}

// ---------------------------------------------------------------- 10
Outcome leakage_guard() {
  Outcome o;
  auto& f = fixture();
  testing::LeakageFinding found;
  std::size_t pairs = 0;
  for (const auto& e : f.d.examples(SplitName::test)) {
    ++pairs;
    testing::check_example(f.d, e, found);
  }
  o.require(pairs == f.d.splits().test.size() && pairs > 0, "test split not fully covered");
  o.require(found.problems.empty(), found.problems.empty() ? "" : found.problems.front());
  if (o.pass)
    o.detail = fmt("%g test pairs, %g oracle comparisons of sources, documents and bags", static_cast<double>(pairs),
                   static_cast<double>(found.checks));
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "aspect weight formula", 1, aspect_weight_formula},
      {2, "edge weight normalization", 1, edge_weight_normalization},
      {3, "graph propagation oracle", 5, propagation_oracle},
      {4, "factorization machine equivalence", 10, fm_equivalence},
      {5, "attention invariants", 10, attention_invariants},
      {6, "gradient integrity", 60, gradient_integrity},
      {7, "overfit capacity and determinism", 300, overfit_capacity},
      {8, "directional ablations", 900, directional_ablations},
      {9, "bucketed evaluation", 1, bucketed_evaluation},
      {10, "leakage guard", 5, leakage_guard},
  };
  std::set<int> only;
  for (int k = 1; k < argc; ++k) only.insert(std::atoi(argv[k]));

  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (out.pass && secs > c.budget_seconds) {
      out.pass = false;
      out.detail += fmt(" (exceeded the %gs budget)", c.budget_seconds);
    }
    failed += out.pass ? 0 : 1;
    std::printf("%s criterion %2d  %-34s %8.2fs  %s\n", out.pass ? "PASS" : "FAIL", c.id, c.name, secs,
                out.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
