#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace kcf::config {

struct DataConfig {
  std::string source = "file";  // file | synthetic
  std::string reviews;          // line-delimited JSON, required for source=file
  int rating_max = 5;
  int k_core = 0;  // 0 keeps everything
  std::vector<double> split_ratios{8, 1, 1};
  std::uint64_t split_seed = 2023;
  bool stratify_by_user = false;
  std::string aspect_terms;  // one term per line
  std::string positive_lexicon;
  std::string negative_lexicon;
  std::string word_vectors;  // optional; no synonym edges without it
  int sentiment_window = 5;
  double synonym_threshold = 0.8;
  int max_aspects = 64;
  int max_doc_tokens = 300;
  int vocab_min_count = 1;
  int vocab_max_size = 30000;
};

struct SyntheticConfig {
  int users = 40;
  int items = 30;
  int aspects = 12;
  int interactions = 400;
  int preferred_per_user = 2;
  int aspects_per_item = 3;
  int latent_dim = 3;
  double latent_scale = 0.35;
  double aspect_bonus = 1.2;
  double aspect_spread = 1.0;  // how much the bonus varies with the shared aspect
  double noise = 0.25;
  int mentions_per_review = 0;  // random item aspects added to each review
  std::uint64_t seed = 7;
};

struct ModelConfig {
  std::string encoder = "compact";  // compact | pretrained
  std::string pretrained_dir;       // encoder.tensors + vocab.txt for encoder=pretrained
  int d_model = 64;
  int d_kg = 64;
  int rgcn_layers = 1;
  int transformer_layers = 4;
  int transformer_heads = 4;
  int k_fm = 10;
  std::string fuse = "pad";  // pad | project
  int encoder_layers = 2;
  int encoder_heads = 4;
  double dropout = 0.1;
  bool clip_predictions = false;
  bool sampled_type_loss = false;
};

struct TrainConfig {
  double learning_rate = 6e-5;
  int batch_size = 12;
  int max_epochs = 50;
  double alpha = 0.2;
  int patience = 5;
  bool early_stopping = true;
  double target_train_mse = 0.0;  // > 0 stops once training MSE falls below it
  bool track_train_mse = false;
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds;  // ablate/sweep repeat over these when set
  std::string variant = "full";
};

struct Config {
  DataConfig data;
  SyntheticConfig synthetic;
  ModelConfig model;
  TrainConfig train;
  std::string run_dir = "run";
  std::string source_path;  // file the config came from, for relative paths
};

// INI file with [data] [synthetic] [model] [train] [run] sections. Unknown
// keys and unparsable values are configuration errors naming the key.
Config load(const std::string& path, const std::vector<std::string>& overrides = {});
Config parse(const std::string& ini_text, const std::vector<std::string>& overrides = {},
             const std::string& base_dir = ".");
// Applies "section.key=value" assignments.
void apply_override(Config& cfg, const std::string& assignment);
std::string to_ini(const Config& cfg);

// Throws a config error naming `key` when `value` is empty.
const std::string& required(const std::string& value, const std::string& key);

}  // namespace kcf::config
