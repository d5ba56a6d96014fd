#include "kcfplm/model.hpp"

#include "kcfplm/error.hpp"

#include <algorithm>
#include <set>

namespace kcf::model {

void apply_variant(ModelOptions& o, const std::string& variant) {
  if (variant == "full") return;
  if (variant == "wo_kg") {
    o.use_kg = false;
  } else if (variant == "wo_aspect_transformer") {
    o.use_aspects = false;
  } else if (variant == "wo_node_type_loss") {
    o.type_loss = false;
  } else if (variant == "wo_source_emb") {
    o.source_embeddings = false;
  } else if (variant == "wo_weight") {
    o.weighting = false;
  } else if (variant == "wo_attention") {
    o.attention = false;
  } else if (variant == "wo_finetune") {
    o.finetune = false;
  } else {
    std::string known;
    for (const auto& v : kVariants) known += (known.empty() ? "" : ", ") + v;
    fail(ErrorKind::config, "unknown ablation variant '" + variant + "' (expected one of " + known + ")");
  }
}

namespace {

std::unique_ptr<text::TextEncoder> make_encoder(const ModelOptions& o, nn::ParameterSet& params,
                                                const std::string& name, std::mt19937_64& rng) {
  if (o.encoder == "pretrained") {
    require(o.bert.has_value(), "pretrained encoder selected without encoder options");
    return std::make_unique<text::BertEncoder>(params, name, *o.bert, rng);
  }
  text::CompactOptions c;
  c.vocab_size = o.vocab_size;
  c.width = o.d_model;
  c.layers = o.encoder_layers;
  c.heads = o.encoder_heads;
  c.ff_width = 4 * o.d_model;
  c.max_positions = std::max(o.max_doc_tokens, 1);
  return std::make_unique<text::CompactEncoder>(params, name, c, rng);
}

}  // namespace

Model::Model(const ModelOptions& opts, const kg::KnowledgeGraph& graph, std::uint64_t seed) : opts_(opts) {
  std::mt19937_64 rng(seed);
  users_ = graph.num_users();
  items_ = graph.num_items();
  aspects_ = graph.num_aspects();
  if (opts.use_kg) {
    adjacency_ = gnn::normalized_adjacency(graph);
    type_labels_ = gnn::node_type_labels(graph);
    gnn::GnnOptions g;
    g.kg_width = opts.d_kg;
    g.model_width = opts.d_model;
    g.layers = opts.rgcn_layers;
    graph_.emplace(params_, "kg", graph.num_nodes(), g, rng);
  }
  user_text_ = text::SideEncoder(params_, "text_user", make_encoder(opts, params_, "text_user.encoder", rng),
                                 opts.d_model, rng);
  item_text_ = text::SideEncoder(params_, "text_item", make_encoder(opts, params_, "text_item.encoder", rng),
                                 opts.d_model, rng);
  if (!opts.finetune) {
    params_.set_trainable(user_text_.encoder_prefix(), false);
    params_.set_trainable(item_text_.encoder_prefix(), false);
  }
  if (opts.use_aspects) {
    aspectnet::AspectNetOptions a;
    a.model_width = opts.d_model;
    a.layers = opts.transformer_layers;
    a.heads = opts.transformer_heads;
    a.rating_max = opts.rating_max;
    a.source_embeddings = opts.source_embeddings;
    a.weighting = opts.weighting;
    a.attention = opts.attention;
    aspect_net_.emplace(params_, "aspect", a, rng);
  }
  fuser_ = predictor::Fuser(params_, "fuse", opts.d_model, opts.fuse, rng);
  fm_ = predictor::make_fm(params_, "fm", 2 * opts.d_model, opts.k_fm, rng, opts.init_bias);
}

void Model::load_encoder_weights(const ckpt::TensorFile& weights) {
  ckpt::apply_relative(weights, params_, user_text_.encoder_prefix());
  ckpt::apply_relative(weights, params_, item_text_.encoder_prefix());
  cache_.clear();
}

Var Model::text_side(const text::SideEncoder& enc, int side, std::span<const data::Example* const> batch,
                     const nn::RunContext& ctx) const {
  std::vector<Var> rows;
  rows.reserve(batch.size());
  for (const auto* ex : batch) {
    const auto& doc = side == 0 ? ex->user_doc : ex->item_doc;
    if (opts_.finetune) {
      rows.push_back(enc.summarize(doc, ctx));
      continue;
    }
    // Frozen encoders run deterministically and their summaries are reused.
    auto key = std::make_pair(side, doc);
    auto it = cache_.find(key);
    if (it == cache_.end()) it = cache_.emplace(std::move(key), enc.summarize(doc, nn::RunContext{}).value()).first;
    rows.push_back(ad::constant(it->second));
  }
  return enc.project(ad::concat_rows(rows));
}

ForwardOutput Model::forward(std::span<const data::Example* const> batch, const nn::RunContext& ctx) const {
  require(!batch.empty(), "forward: empty batch");
  ForwardOutput out;
  const auto b = static_cast<Eigen::Index>(batch.size());
  std::vector<int> user_rows, item_rows;
  for (const auto* ex : batch) {
    user_rows.push_back(ex->user);
    item_rows.push_back(users_ + ex->item);
  }

  Var kg_user, kg_item, kg_aspect;
  bool any_bag = false;
  for (const auto* ex : batch) any_bag = any_bag || !ex->bag.items.empty();
  if (graph_) {
    const Var v = graph_->propagate(adjacency_);
    kg_user = graph_->project(ad::gather_rows(v, user_rows), kg::NodeType::user);
    kg_item = graph_->project(ad::gather_rows(v, item_rows), kg::NodeType::item);
    if (aspect_net_ && any_bag && aspects_ > 0)
      kg_aspect = graph_->project(ad::slice_rows(v, users_ + items_, aspects_), kg::NodeType::aspect);
    if (opts_.type_loss && ctx.training) {
      const Var logits = graph_->type_logits(v);
      std::vector<int> rows;
      if (opts_.sampled_type_loss) {
        std::set<int> touched(user_rows.begin(), user_rows.end());
        touched.insert(item_rows.begin(), item_rows.end());
        for (const auto* ex : batch)
          for (const auto& a : ex->bag.items) touched.insert(users_ + items_ + a.aspect);
        rows.assign(touched.begin(), touched.end());
      }
      auto tl = gnn::node_type_loss(logits, type_labels_, rows);
      out.type_loss = tl.loss;
      out.clamped = tl.clamped;
    }
  } else {
    kg_user = ad::zeros(b, opts_.d_model);
    kg_item = ad::zeros(b, opts_.d_model);
  }

  const Var user = text::enhance(text_side(user_text_, 0, batch, ctx), kg_user);
  const Var item = text::enhance(text_side(item_text_, 1, batch, ctx), kg_item);
  const Var query = text::make_query(user, item);

  Var pooled;
  if (aspect_net_) {
    std::vector<Var> rows;
    for (Eigen::Index k = 0; k < b; ++k) {
      const auto& bag = batch[static_cast<std::size_t>(k)]->bag.items;
      Var e_kg;
      if (bag.empty()) {
        e_kg = ad::zeros(0, opts_.d_model);
      } else if (kg_aspect.defined()) {
        std::vector<int> ids;
        for (const auto& a : bag) ids.push_back(a.aspect);
        e_kg = ad::gather_rows(kg_aspect, ids);
      } else {
        e_kg = ad::zeros(static_cast<Eigen::Index>(bag.size()), opts_.d_model);
      }
      auto a = aspect_net_->forward(ad::slice_rows(query, k, 1), e_kg, bag, ctx);
      rows.push_back(a.pooled);
      out.aspects.push_back(std::move(a));
    }
    pooled = ad::concat_rows(rows);
  } else {
    pooled = ad::zeros(b, opts_.d_model);
  }
  out.predictions = predictor::fm_predict(fuser_.fuse(query, pooled), fm_);
  return out;
}

std::vector<double> Model::predict(std::span<const data::Example> examples, std::size_t batch_size) const {
  std::vector<double> out;
  out.reserve(examples.size());
  std::vector<const data::Example*> batch;
  auto flush = [&] {
    if (batch.empty()) return;
    const auto y = forward(batch, nn::RunContext{}).predictions.value();
    for (Eigen::Index r = 0; r < y.rows(); ++r)
      out.push_back(opts_.clip_predictions ? predictor::clip_rating(y(r, 0), opts_.rating_max) : y(r, 0));
    batch.clear();
  };
  for (const auto& ex : examples) {
    batch.push_back(&ex);
    if (batch.size() >= batch_size) flush();
  }
  flush();
  return out;
}

}  // namespace kcf::model
