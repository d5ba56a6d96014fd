#include "doctest.h"
#include "pipeline.hpp"

#include "kcfplm/error.hpp"
#include "kcfplm/harness.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

using namespace kcf;
using corpus::SplitName;

namespace {

struct Fixture {
  std::string dir = testing::scratch_dir("harness");
  config::Config cfg = testing::fixture_config(dir, {"model.dropout=0"});
  session::Session session{cfg};
  const data::Dataset& d = session.dataset();
  ~Fixture() { std::filesystem::remove_all(dir); }
};

harness::TrainOptions quick(int epochs) {
  harness::TrainOptions o;
  o.learning_rate = 1e-3;
  o.batch_size = 4;
  o.max_epochs = epochs;
  o.dropout = 0.0;
  return o;
}

}  // namespace

TEST_CASE("bucket boundaries") {
  const auto b = harness::empty_buckets();
  REQUIRE(b.size() == 5);
  CHECK(b[0].label == "0");
  CHECK(b[1].label == "[1,12)");
  CHECK(b[4].label == "[36,inf)");
  CHECK_FALSE(b[4].hi.has_value());
  CHECK(harness::bucket_of(0) == 0);
  CHECK(harness::bucket_of(1) == 1);
  CHECK(harness::bucket_of(11) == 1);
  CHECK(harness::bucket_of(12) == 2);
  CHECK(harness::bucket_of(23) == 2);
  CHECK(harness::bucket_of(24) == 3);
  CHECK(harness::bucket_of(35) == 3);
  CHECK(harness::bucket_of(36) == 4);
  CHECK(harness::bucket_of(100000) == 4);
}

TEST_CASE("scoring against oracles") {
  Fixture f;
  const auto& ex = f.d.examples(SplitName::train);

  std::vector<double> exact;
  for (const auto& e : ex) exact.push_back(e.rating);
  const auto perfect = harness::score(f.d, ex, exact, "train");
  CHECK(perfect.mse == 0.0);
  CHECK(perfect.count == ex.size());

  // Constant predictor: MSE is the mean squared deviation from the constant.
  const double c = 3.25;
  std::vector<double> flat(ex.size(), c);
  double want = 0;
  std::vector<double> bucket_sum(5, 0.0);
  std::vector<std::size_t> bucket_n(5, 0);
  for (const auto& e : ex) {
    const double sq = (e.rating - c) * (e.rating - c);
    want += sq;
    const auto b = harness::bucket_of(e.bag.untruncated_size);
    bucket_sum[b] += sq;
    ++bucket_n[b];
  }
  want /= static_cast<double>(ex.size());
  const auto r = harness::score(f.d, ex, flat, "train");
  CHECK(r.mse == doctest::Approx(want).epsilon(1e-12));
  std::size_t total = 0;
  for (std::size_t b = 0; b < 5; ++b) {
    CHECK(r.buckets[b].count == bucket_n[b]);
    if (bucket_n[b]) CHECK(r.buckets[b].mse == doctest::Approx(bucket_sum[b] / bucket_n[b]));
    total += r.buckets[b].count;
  }
  CHECK(total == ex.size());
  CHECK(r.predictions.size() == ex.size());

  const auto j = harness::to_json(r);
  CHECK(j["buckets"].size() == 5);
  CHECK(j["split"] == "train");
  const auto text = harness::to_text(r);
  for (const auto& b : r.buckets) CHECK(text.find(b.label) != std::string::npos);

  CHECK_THROWS_AS(harness::score(f.d, ex, std::vector<double>(1, 0.0), "train"), Error);
}

TEST_CASE("every split's report covers all its pairs") {
  Fixture f;
  model::Model m(harness::model_options(f.cfg, f.d), f.d.graph(), 1);
  for (auto s : {SplitName::train, SplitName::validation, SplitName::test}) {
    const auto r = harness::evaluate(m, f.d, s);
    std::size_t total = 0;
    for (const auto& b : r.buckets) total += b.count;
    CHECK(r.buckets.size() == 5);
    CHECK(total == f.d.splits().get(s).size());
    CHECK(r.count == total);
  }
}

TEST_CASE("early stopping keeps the best validation epoch") {
  Fixture f;
  model::Model m(harness::model_options(f.cfg, f.d), f.d.graph(), 1);
  auto o = quick(8);
  o.patience = 2;
  o.learning_rate = 3e-2;  // large steps so validation MSE moves both ways
  int callbacks = 0;
  o.on_epoch = [&](const harness::EpochRecord&) { ++callbacks; };
  const auto r = harness::train(m, f.d, o);
  REQUIRE_FALSE(r.history.empty());
  CHECK(callbacks == static_cast<int>(r.history.size()));
  const auto best = std::min_element(r.history.begin(), r.history.end(), [](const auto& a, const auto& b) {
    return a.validation_mse < b.validation_mse;
  });
  CHECK(r.best_validation_mse == best->validation_mse);
  CHECK(r.best_epoch == best->epoch);
  CHECK(harness::evaluate(m, f.d, SplitName::validation).mse == doctest::Approx(r.best_validation_mse).epsilon(1e-12));
  if (static_cast<int>(r.history.size()) < o.max_epochs) CHECK(r.history.back().epoch - r.best_epoch == o.patience);
}

TEST_CASE("same seed, same run") {
  Fixture f;
  auto run = [&] {
    model::Model m(harness::model_options(f.cfg, f.d), f.d.graph(), 7);
    auto o = quick(2);
    o.dropout = 0.1;
    o.seed = 11;
    o.track_train_mse = true;
    auto r = harness::train(m, f.d, o);
    return std::make_pair(r, harness::evaluate(m, f.d, SplitName::test).mse);
  };
  const auto [a, ma] = run();
  const auto [b, mb] = run();
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t k = 0; k < a.history.size(); ++k) {
    CHECK(a.history[k].train_loss == b.history[k].train_loss);
    CHECK(a.history[k].validation_mse == b.history[k].validation_mse);
    CHECK(*a.history[k].train_mse == *b.history[k].train_mse);
  }
  CHECK(ma == mb);
  CHECK(a.steps == 2 * static_cast<long>((f.d.splits().train.size() + 3) / 4));
}

TEST_CASE("alpha zero drops the node-type term") {
  Fixture f;
  auto cfg = f.cfg;
  cfg.train.alpha = 0;
  CHECK_FALSE(harness::model_options(cfg, f.d).type_loss);
  CHECK(harness::model_options(f.cfg, f.d).type_loss);
  // init_bias is the mean training rating.
  double mean = 0;
  for (const auto& e : f.d.examples(SplitName::train)) mean += e.rating;
  mean /= static_cast<double>(f.d.examples(SplitName::train).size());
  CHECK(harness::model_options(f.cfg, f.d).init_bias == doctest::Approx(mean));
}

TEST_CASE("a non-finite loss stops training with a diagnostic") {
  Fixture f;
  model::Model m(harness::model_options(f.cfg, f.d), f.d.graph(), 1);
  for (const auto& p : m.params().entries())
    if (p.name == "fm.w0") const_cast<ad::Var&>(p.var).mutable_value()(0, 0) = std::numeric_limits<double>::quiet_NaN();
  const auto r = harness::train(m, f.d, quick(3));
  CHECK(r.diverged);
  CHECK_FALSE(r.diagnostic.empty());
  CHECK(r.history.empty());
}

TEST_CASE("variant runs and layer sweeps") {
  Fixture f;
  auto cfg = f.cfg;
  cfg.train.max_epochs = 1;
  const auto v = harness::run_variant(cfg, f.d, "wo_source_emb", {1, 2});
  CHECK(v.variant == "wo_source_emb");
  CHECK(v.test_mse.size() == 2);
  CHECK(v.reports.size() == 2);
  CHECK(v.reports[0].variant == "wo_source_emb");
  CHECK(v.reports[0].split == "test");
  const auto [mean, sd] = harness::mean_std(v.test_mse);
  CHECK(v.mean == mean);
  CHECK(v.stddev == sd);
  CHECK(v.stddev == doctest::Approx(std::abs(v.test_mse[0] - v.test_mse[1]) / std::sqrt(2.0)));

  const auto rows = harness::sweep_rgcn_layers(cfg, f.d, {1, 3}, {1});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].layers == 1);
  CHECK(rows[1].layers == 3);
  CHECK(rows[1].result.test_mse.size() == 1);
  CHECK(rows[1].result.trainable_parameters[0] > rows[0].result.trainable_parameters[0]);
  CHECK_THROWS_AS(harness::sweep_rgcn_layers(cfg, f.d, {0}, {1}), Error);
  CHECK_THROWS_AS(harness::run_variant(cfg, f.d, "nope", {1}), Error);
}

TEST_CASE("mean and sample standard deviation") {
  const std::vector<double> xs{1, 2, 3, 4};
  const auto [m, s] = harness::mean_std(xs);
  CHECK(m == 2.5);
  CHECK(s == doctest::Approx(std::sqrt(5.0 / 3.0)));
  const std::vector<double> one{7};
  CHECK(harness::mean_std(one).second == 0.0);
}
