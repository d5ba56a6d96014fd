#pragma once

#include "kcfplm/aspectnet.hpp"
#include "kcfplm/checkpoint.hpp"
#include "kcfplm/dataset.hpp"
#include "kcfplm/gnn.hpp"
#include "kcfplm/predictor.hpp"
#include "kcfplm/textenc.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace kcf::model {

using ad::Var;

struct ModelOptions {
  int d_model = 64;
  int d_kg = 64;
  int rgcn_layers = 1;
  int transformer_layers = 4;
  int transformer_heads = 4;
  int k_fm = 10;
  predictor::FuseMode fuse = predictor::FuseMode::pad;
  std::string encoder = "compact";
  int encoder_layers = 2;
  int encoder_heads = 4;
  int max_doc_tokens = 300;
  int vocab_size = 0;
  std::optional<text::BertOptions> bert;  // set for encoder = pretrained
  double dropout = 0.1;
  int rating_max = 5;
  bool clip_predictions = false;
  bool sampled_type_loss = false;
  double init_bias = 0.0;

  // Ablation switches.
  bool use_kg = true;
  bool use_aspects = true;
  bool source_embeddings = true;
  bool weighting = true;
  bool attention = true;
  bool finetune = true;
  bool type_loss = true;
};

inline const std::vector<std::string> kVariants{"full",      "wo_kg",     "wo_aspect_transformer",
                                                "wo_node_type_loss", "wo_source_emb", "wo_weight",
                                                "wo_attention", "wo_finetune"};
// Flips the single switch a variant names; unknown names are config errors.
void apply_variant(ModelOptions& opts, const std::string& variant);

struct ForwardOutput {
  Var predictions;  // batch x 1
  Var type_loss;    // undefined when the graph branch or the loss is off
  int clamped = 0;
  std::vector<aspectnet::AspectOutput> aspects;
};

class Model {
 public:
  Model(const ModelOptions& opts, const kg::KnowledgeGraph& graph, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }
  const ModelOptions& options() const { return opts_; }

  ForwardOutput forward(std::span<const data::Example* const> batch, const nn::RunContext& ctx) const;
  // Evaluation-mode predictions, clipped when configured.
  std::vector<double> predict(std::span<const data::Example> examples, std::size_t batch_size = 64) const;

  // Loads encoder weights into both side encoders.
  void load_encoder_weights(const ckpt::TensorFile& weights);
  void clear_cache() const { cache_.clear(); }

 private:
  Var text_side(const text::SideEncoder& enc, int side, std::span<const data::Example* const> batch,
                const nn::RunContext& ctx) const;

  ModelOptions opts_;
  nn::ParameterSet params_;
  gnn::Adjacency adjacency_;
  std::vector<int> type_labels_;
  int users_ = 0, items_ = 0, aspects_ = 0;
  std::optional<gnn::GraphEncoder> graph_;
  text::SideEncoder user_text_, item_text_;
  std::optional<aspectnet::AspectNet> aspect_net_;
  predictor::Fuser fuser_;
  predictor::FmParams fm_;
  // Frozen-encoder summaries keyed by side and document.
  mutable std::map<std::pair<int, std::vector<int>>, ad::Matrix> cache_;
};

}  // namespace kcf::model
