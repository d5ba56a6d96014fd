#include "kcfplm/harness.hpp"

#include "kcfplm/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace kcf::harness {

namespace {

double mse_of(std::span<const data::Example> ex, std::span<const double> y) {
  if (ex.empty()) return 0.0;
  double s = 0;
  for (std::size_t k = 0; k < ex.size(); ++k) s += (y[k] - ex[k].rating) * (y[k] - ex[k].rating);
  return s / static_cast<double>(ex.size());
}

bool finite(const ad::Matrix& m) { return m.allFinite(); }

}  // namespace

TrainResult train(model::Model& m, const data::Dataset& d, const TrainOptions& opts) {
  using clock = std::chrono::steady_clock;
  require(opts.batch_size >= 1 && opts.max_epochs >= 1, "train: batch size and epoch count must be positive");
  const auto& train_ex = d.examples(corpus::SplitName::train);
  const auto& val_ex = d.examples(corpus::SplitName::validation);
  require(!train_ex.empty(), "train: no training examples");

  TrainResult result;
  result.min_aspect_weight = std::numeric_limits<double>::infinity();
  result.max_aspect_weight = -std::numeric_limits<double>::infinity();
  nn::AdamOptions adam_opts;
  adam_opts.learning_rate = opts.learning_rate;
  nn::Adam adam(m.params(), adam_opts);
  std::mt19937_64 order_rng(opts.seed * 0x9E3779B97F4A7C15ULL + 1);
  std::mt19937_64 drop_rng(opts.seed * 0xBF58476D1CE4E5B9ULL + 2);
  const nn::RunContext ctx{true, &drop_rng, opts.dropout};

  std::vector<std::size_t> order(train_ex.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<ad::Matrix> best = m.params().snapshot();
  std::vector<ad::Matrix> last_good = best;
  result.best_validation_mse = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 1; epoch <= opts.max_epochs; ++epoch) {
    const auto t0 = clock::now();
    std::shuffle(order.begin(), order.end(), order_rng);
    double loss_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opts.batch_size)) {
      std::vector<const data::Example*> batch;
      Eigen::VectorXd truth(static_cast<Eigen::Index>(
          std::min(order.size() - start, static_cast<std::size_t>(opts.batch_size))));
      for (Eigen::Index k = 0; k < truth.size(); ++k) {
        const auto& ex = train_ex[order[start + static_cast<std::size_t>(k)]];
        batch.push_back(&ex);
        truth(k) = ex.rating;
      }
      m.params().zero_grad();
      ad::Tape tape;
      double loss_value = 0;
      {
        ad::TapeScope scope(tape);
        auto out = m.forward(batch, ctx);
        const ad::Var lr = predictor::mse_loss(out.predictions, truth);
        const ad::Var loss = predictor::hybrid_loss(lr, out.type_loss, opts.alpha);
        loss_value = loss.scalar();
        result.clamped_type_rows += out.clamped;
        for (const auto& a : out.aspects)
          for (double w : a.aspect_weights) {
            result.min_aspect_weight = std::min(result.min_aspect_weight, w);
            result.max_aspect_weight = std::max(result.max_aspect_weight, w);
          }
        if (std::isfinite(loss_value)) tape.backward(loss);
      }
      bool ok = std::isfinite(loss_value);
      if (ok) {
        adam.step();
        ++result.steps;
        for (const auto& p : m.params().entries()) ok = ok && finite(p.var.value());
      }
      if (!ok) {
        m.params().restore(last_good);
        m.clear_cache();
        result.diverged = true;
        std::ostringstream why;
        why << "training diverged at epoch " << epoch << ", step " << result.steps
            << " (non-finite loss or parameters); restored the parameters from the end of epoch " << epoch - 1;
        result.diagnostic = why.str();
        return result;
      }
      loss_sum += loss_value;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train_ex.size());
    rec.validation_mse = mse_of(val_ex, m.predict(val_ex));
    if (opts.track_train_mse || opts.target_train_mse > 0) rec.train_mse = mse_of(train_ex, m.predict(train_ex));
    rec.seconds = std::chrono::duration<double>(clock::now() - t0).count();
    result.history.push_back(rec);
    if (opts.on_epoch) opts.on_epoch(rec);
    last_good = m.params().snapshot();

    if (rec.validation_mse < result.best_validation_mse) {
      result.best_validation_mse = rec.validation_mse;
      result.best_epoch = epoch;
      best = last_good;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (opts.target_train_mse > 0 && rec.train_mse && *rec.train_mse < opts.target_train_mse) {
      result.reached_target = true;
      break;
    }
    if (opts.early_stopping && since_best >= opts.patience) break;
  }
  if (opts.early_stopping) m.params().restore(best);
  if (!std::isfinite(result.min_aspect_weight)) result.min_aspect_weight = result.max_aspect_weight = 0.0;
  return result;
}

std::vector<Bucket> empty_buckets() {
  return {{"0", 0, 1, 0, 0}, {"[1,12)", 1, 12, 0, 0}, {"[12,24)", 12, 24, 0, 0}, {"[24,36)", 24, 36, 0, 0},
          {"[36,inf)", 36, std::nullopt, 0, 0}};
}

std::size_t bucket_of(int n) {
  require(n >= 0, "bucket_of: negative aspect count");
  if (n == 0) return 0;
  if (n < 12) return 1;
  if (n < 24) return 2;
  if (n < 36) return 3;
  return 4;
}

EvalReport score(const data::Dataset& d, std::span<const data::Example> examples, std::span<const double> predicted,
                 const std::string& split) {
  require(examples.size() == predicted.size(), "score: one prediction per example expected");
  EvalReport r;
  r.split = split;
  r.buckets = empty_buckets();
  double total = 0, cold = 0;
  std::vector<double> sums(r.buckets.size(), 0.0);
  for (std::size_t k = 0; k < examples.size(); ++k) {
    const auto& ex = examples[k];
    const double e2 = (predicted[k] - ex.rating) * (predicted[k] - ex.rating);
    total += e2;
    const std::size_t b = bucket_of(ex.bag.untruncated_size);
    sums[b] += e2;
    ++r.buckets[b].count;
    if (ex.cold) {
      cold += e2;
      ++r.cold_count;
    }
    r.predictions.push_back({d.corpus().users.label(ex.user), d.corpus().items.label(ex.item), ex.rating, predicted[k],
                             ex.bag.untruncated_size, ex.cold});
  }
  r.count = examples.size();
  r.mse = r.count ? total / static_cast<double>(r.count) : 0.0;
  r.cold_mse = r.cold_count ? cold / static_cast<double>(r.cold_count) : 0.0;
  for (std::size_t b = 0; b < r.buckets.size(); ++b)
    r.buckets[b].mse = r.buckets[b].count ? sums[b] / static_cast<double>(r.buckets[b].count) : 0.0;
  return r;
}

EvalReport evaluate(const model::Model& m, const data::Dataset& d, corpus::SplitName split) {
  const auto& ex = d.examples(split);
  const auto y = m.predict(ex);
  return score(d, ex, y, corpus::to_string(split));
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json buckets = nlohmann::json::array();
  for (const auto& b : r.buckets) {
    nlohmann::json j{{"interval", b.label}, {"lo", b.lo}, {"count", b.count}};
    j["hi"] = b.hi ? nlohmann::json(*b.hi) : nlohmann::json(nullptr);
    j["mse"] = b.count ? nlohmann::json(b.mse) : nlohmann::json(nullptr);
    buckets.push_back(j);
  }
  nlohmann::json j{{"split", r.split}, {"variant", r.variant}, {"mse", r.mse}, {"count", r.count},
                   {"buckets", buckets}, {"cold_count", r.cold_count}};
  j["cold_mse"] = r.cold_count ? nlohmann::json(r.cold_mse) : nlohmann::json(nullptr);
  return j;
}

std::string to_text(const EvalReport& r) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(4);
  o << "split " << r.split << "  variant " << r.variant << "\n";
  o << "MSE " << r.mse << " over " << r.count << " pairs\n";
  o << "aspects      count  MSE\n";
  for (const auto& b : r.buckets) {
    o << b.label;
    for (std::size_t pad = b.label.size(); pad < 12; ++pad) o << ' ';
    o << ' ' << b.count;
    if (b.count) o << "  " << b.mse;
    o << '\n';
  }
  o << "cold-start pairs " << r.cold_count;
  if (r.cold_count) o << "  MSE " << r.cold_mse;
  o << '\n';
  return o.str();
}

model::ModelOptions model_options(const config::Config& cfg, const data::Dataset& d,
                                  const std::optional<text::BertOptions>& bert) {
  model::ModelOptions o;
  o.d_model = cfg.model.d_model;
  o.d_kg = cfg.model.d_kg;
  o.rgcn_layers = cfg.model.rgcn_layers;
  o.transformer_layers = cfg.model.transformer_layers;
  o.transformer_heads = cfg.model.transformer_heads;
  o.k_fm = cfg.model.k_fm;
  o.fuse = predictor::fuse_mode_from_string(cfg.model.fuse);
  o.encoder = cfg.model.encoder;
  o.encoder_layers = cfg.model.encoder_layers;
  o.encoder_heads = cfg.model.encoder_heads;
  o.max_doc_tokens = cfg.data.max_doc_tokens;
  o.vocab_size = d.vocab().size();
  o.bert = bert;
  o.dropout = cfg.model.dropout;
  o.rating_max = cfg.data.rating_max;
  o.clip_predictions = cfg.model.clip_predictions;
  o.sampled_type_loss = cfg.model.sampled_type_loss;
  const auto& tr = d.examples(corpus::SplitName::train);
  double mean = 0;
  for (const auto& e : tr) mean += e.rating;
  o.init_bias = tr.empty() ? 0.0 : mean / static_cast<double>(tr.size());
  if (cfg.train.alpha == 0.0) o.type_loss = false;
  return o;
}

TrainOptions train_options(const config::Config& cfg) {
  TrainOptions t;
  t.learning_rate = cfg.train.learning_rate;
  t.batch_size = cfg.train.batch_size;
  t.max_epochs = cfg.train.max_epochs;
  t.alpha = cfg.train.alpha;
  t.patience = cfg.train.patience;
  t.early_stopping = cfg.train.early_stopping;
  t.target_train_mse = cfg.train.target_train_mse;
  t.track_train_mse = cfg.train.track_train_mse;
  t.dropout = cfg.model.dropout;
  t.seed = cfg.train.seed;
  return t;
}

std::pair<double, double> mean_std(std::span<const double> xs) {
  if (xs.empty()) return {0.0, 0.0};
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

VariantResult run_variant(const config::Config& cfg, const data::Dataset& d, const std::string& variant,
                          const std::vector<std::uint64_t>& seeds, const std::optional<text::BertOptions>& bert,
                          const ModelHook& hook) {
  require(!seeds.empty(), "run_variant: no seeds");
  VariantResult out;
  out.variant = variant;
  out.seeds = seeds;
  for (auto seed : seeds) {
    auto mo = model_options(cfg, d, bert);
    model::apply_variant(mo, variant);
    model::Model m(mo, d.graph(), seed);
    if (hook) hook(m);
    auto to = train_options(cfg);
    to.seed = seed;
    if (!mo.type_loss) to.alpha = 0.0;
    auto tr = train(m, d, to);
    if (tr.diverged) fail(ErrorKind::diverged, variant + " seed " + std::to_string(seed) + ": " + tr.diagnostic);
    auto report = evaluate(m, d, corpus::SplitName::test);
    report.variant = variant;
    out.test_mse.push_back(report.mse);
    out.reports.push_back(std::move(report));
    out.trainable_parameters.push_back(m.params().trainable_count());
    out.runs.push_back(std::move(tr));
  }
  std::tie(out.mean, out.stddev) = mean_std(out.test_mse);
  return out;
}

std::vector<SweepRow> sweep_rgcn_layers(const config::Config& cfg, const data::Dataset& d,
                                        const std::vector<int>& layers, const std::vector<std::uint64_t>& seeds,
                                        const std::optional<text::BertOptions>& bert, const ModelHook& hook) {
  require(!layers.empty(), "sweep: no layer values");
  std::vector<SweepRow> rows;
  for (int l : layers) {
    if (l < 1) fail(ErrorKind::config, "sweep: layer counts must be positive");
    config::Config c = cfg;
    c.model.rgcn_layers = l;
    rows.push_back({l, run_variant(c, d, c.train.variant, seeds, bert, hook)});
  }
  return rows;
}

}  // namespace kcf::harness
