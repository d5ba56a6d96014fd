#pragma once

#include "kcfplm/config.hpp"
#include "kcfplm/dataset.hpp"
#include "kcfplm/model.hpp"

#include <functional>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <string>
#include <vector>

namespace kcf::harness {

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // mean per-example rating loss plus alpha * mean type loss
  double validation_mse = 0.0;
  std::optional<double> train_mse;
  double seconds = 0.0;
};

struct TrainOptions {
  double learning_rate = 6e-5;
  int batch_size = 12;
  int max_epochs = 50;
  double alpha = 0.2;
  int patience = 5;
  bool early_stopping = true;
  double target_train_mse = 0.0;
  bool track_train_mse = false;
  double dropout = 0.1;
  std::uint64_t seed = 1;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_validation_mse = 0.0;
  bool diverged = false;
  bool reached_target = false;
  std::string diagnostic;
  long steps = 0;
  // Range of aspect weights w_a seen in training forward passes.
  double min_aspect_weight = 0.0;
  double max_aspect_weight = 0.0;
  long clamped_type_rows = 0;
};

// Adam on L_r + alpha L_t with early stopping on validation MSE. The model
// ends up holding the best-validation parameters (or the last epoch's when
// early stopping is off). A non-finite loss restores the last finite state
// and returns with `diverged` set.
TrainResult train(model::Model& m, const data::Dataset& d, const TrainOptions& opts);

struct Bucket {
  std::string label;
  int lo = 0;
  std::optional<int> hi;  // exclusive; none = unbounded
  double mse = 0.0;
  std::size_t count = 0;
};

struct Prediction {
  std::string user;
  std::string item;
  double rating = 0.0;
  double predicted = 0.0;
  int aspects = 0;
  bool cold = false;
};

struct EvalReport {
  std::string split;
  std::string variant = "full";
  double mse = 0.0;
  std::size_t count = 0;
  std::vector<Bucket> buckets;  // zero, [1,12), [12,24), [24,36), [36,inf)
  std::size_t cold_count = 0;
  double cold_mse = 0.0;
  std::vector<Prediction> predictions;
};

std::vector<Bucket> empty_buckets();
// Index into empty_buckets() for a bag of this many aspects.
std::size_t bucket_of(int aspect_count);

EvalReport score(const data::Dataset& d, std::span<const data::Example> examples, std::span<const double> predicted,
                 const std::string& split);
EvalReport evaluate(const model::Model& m, const data::Dataset& d, corpus::SplitName split);

nlohmann::json to_json(const EvalReport& r);
std::string to_text(const EvalReport& r);

model::ModelOptions model_options(const config::Config& cfg, const data::Dataset& d,
                                  const std::optional<text::BertOptions>& bert = std::nullopt);
TrainOptions train_options(const config::Config& cfg);

struct VariantResult {
  std::string variant;
  std::vector<std::uint64_t> seeds;
  std::vector<double> test_mse;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 for one seed
  std::vector<TrainResult> runs;
  std::vector<EvalReport> reports;  // test split, one per seed
  std::vector<std::size_t> trainable_parameters;
};

// Encoder weights, when given, are loaded into every freshly built model.
using ModelHook = std::function<void(model::Model&)>;

VariantResult run_variant(const config::Config& cfg, const data::Dataset& d, const std::string& variant,
                          const std::vector<std::uint64_t>& seeds,
                          const std::optional<text::BertOptions>& bert = std::nullopt, const ModelHook& hook = {});

struct SweepRow {
  int layers = 0;
  VariantResult result;
};

std::vector<SweepRow> sweep_rgcn_layers(const config::Config& cfg, const data::Dataset& d,
                                        const std::vector<int>& layers, const std::vector<std::uint64_t>& seeds,
                                        const std::optional<text::BertOptions>& bert = std::nullopt,
                                        const ModelHook& hook = {});

std::pair<double, double> mean_std(std::span<const double> xs);

}  // namespace kcf::harness
