#include "kcfplm/session.hpp"

#include "kcfplm/error.hpp"
#include "kcfplm/synthetic.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace kcf::session {

namespace fs = std::filesystem;

namespace {

// Every file a stage may leave behind, in stage order.
const std::vector<std::string> kIngestFiles{"corpus.jsonl", "splits.tsv", "vocab.txt", "config.ini"};
const std::vector<std::string> kExtractFiles{"aspects.txt", "mentions.tsv", "synonyms.tsv"};
const std::vector<std::string> kGraphFiles{"nodes.tsv", "edges.tsv"};
const std::vector<std::string> kTrainFiles{"checkpoint.tensors", "metrics.jsonl", "metrics.txt"};

std::ofstream open_out(const std::string& p, bool append = false) {
  std::ofstream f(p, append ? std::ios::app : std::ios::trunc);
  if (!f) fail(ErrorKind::input, "cannot write " + p);
  return f;
}

std::ifstream open_in(const std::string& p) {
  std::ifstream f(p);
  if (!f) fail(ErrorKind::input, "cannot read " + p);
  return f;
}

corpus::SplitRatios ratios(const config::Config& cfg) {
  const auto& r = cfg.data.split_ratios;
  if (r.size() != 3) fail(ErrorKind::config, "config key data.split_ratios: expected three numbers");
  return {r[0], r[1], r[2]};
}

int meta_int(const ckpt::TensorFile& f, const std::string& key) {
  auto it = f.meta.find(key);
  if (it == f.meta.end()) fail(ErrorKind::input, "encoder weights lack meta field " + key);
  return std::stoi(it->second);
}

}  // namespace

struct Session::State {
  std::optional<corpus::ReviewCorpus> corpus;
  std::optional<corpus::SplitSet> splits;
  std::optional<aspects::AspectVocabulary> aspects;
  std::vector<aspects::AspectMention> mentions;
  std::optional<kg::KnowledgeGraph> graph;
  std::unique_ptr<data::Dataset> dataset;
  std::optional<text::BertOptions> bert;
  std::optional<ckpt::TensorFile> encoder_weights;
};

Session::Session(config::Config cfg) : cfg_(std::move(cfg)), state_(std::make_unique<State>()) {
  if (cfg_.model.encoder == "pretrained") {
    const fs::path dir = config::required(cfg_.model.pretrained_dir, "model.pretrained_dir");
    state_->encoder_weights = ckpt::load_tensor_file((dir / "encoder.tensors").string());
    const auto& w = *state_->encoder_weights;
    text::BertOptions b;
    b.vocab_size = meta_int(w, "vocab_size");
    b.width = meta_int(w, "width");
    b.layers = meta_int(w, "layers");
    b.heads = meta_int(w, "heads");
    b.ff_width = meta_int(w, "ff_width");
    b.max_positions = meta_int(w, "max_positions");
    b.type_vocab = meta_int(w, "type_vocab");
    b.ln_eps = std::stod(w.meta.at("ln_eps"));
    state_->bert = b;
    // Content tokens plus [CLS] and [SEP] must fit the position table.
    cfg_.data.max_doc_tokens = std::min(cfg_.data.max_doc_tokens, b.max_positions - 2);
  }
}

Session::~Session() = default;

std::string Session::path(const std::string& name) const { return (fs::path(cfg_.run_dir) / name).string(); }

bool Session::has(const std::string& name) const { return fs::exists(path(name)); }

void Session::check_manifest() const {
  if (!has("manifest.json")) return;
  auto in = open_in(path("manifest.json"));
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::input, path("manifest.json") + " is not valid JSON");
  }
  const int v = j.value("artifact_version", -1);
  if (v != kArtifactVersion)
    fail(ErrorKind::version, "run directory " + cfg_.run_dir + " has artifact version " + std::to_string(v) +
                                 "; this build reads version " + std::to_string(kArtifactVersion));
}

void Session::record_stage(const std::string& stage) const {
  nlohmann::json j{{"artifact_version", kArtifactVersion}, {"stages", nlohmann::json::array()}};
  if (has("manifest.json")) {
    check_manifest();
    auto in = open_in(path("manifest.json"));
    in >> j;
  }
  auto& stages = j["stages"];
  if (std::find(stages.begin(), stages.end(), stage) == stages.end()) stages.push_back(stage);
  auto out = open_out(path("manifest.json"));
  out << j.dump(2) << '\n';
}

corpus::ParseStats Session::ingest() {
  fs::create_directories(cfg_.run_dir);
  check_manifest();

  corpus::ParseResult parsed;
  if (cfg_.data.source == "synthetic") {
    auto data = synthetic::generate(cfg_.synthetic, cfg_.data.rating_max);
    synthetic::write(data, path("synthetic"));
    parsed = corpus::parse_reviews_file(path("synthetic/reviews.jsonl"), cfg_.data.rating_max);
  } else {
    parsed = corpus::parse_reviews_file(config::required(cfg_.data.reviews, "data.reviews"), cfg_.data.rating_max);
  }
  auto c = cfg_.data.k_core > 0 ? corpus::filter_k_core(parsed.corpus, cfg_.data.k_core) : std::move(parsed.corpus);
  auto s = corpus::split_corpus(c, ratios(cfg_), cfg_.data.split_seed, cfg_.data.stratify_by_user);
  // Only a successful parse replaces an existing run.
  for (const auto* group : {&kIngestFiles, &kExtractFiles, &kGraphFiles, &kTrainFiles})
    for (const auto& f : *group) fs::remove(path(f));
  fs::remove(path("manifest.json"));
  {
    auto f = open_out(path("corpus.jsonl"));
    corpus::write_reviews(f, c);
  }
  {
    auto f = open_out(path("splits.tsv"));
    corpus::write_split_manifest(f, c, s);
  }
  if (cfg_.model.encoder != "pretrained") {
    std::vector<std::string> texts;
    for (auto id : s.train) texts.push_back(c.review(id).text);
    auto vocab = text::Vocabulary::build(texts, cfg_.data.vocab_min_count,
                                         static_cast<std::size_t>(cfg_.data.vocab_max_size));
    auto f = open_out(path("vocab.txt"));
    vocab.write(f);
  }
  {
    auto f = open_out(path("config.ini"));
    f << config::to_ini(cfg_);
  }
  state_ = std::make_unique<State>(State{std::move(c), std::move(s), {}, {}, {}, {}, state_->bert,
                                         std::move(state_->encoder_weights)});
  record_stage("ingest");
  return parsed.stats;
}

void Session::ensure_ingested() {
  if (state_->corpus) return;
  check_manifest();
  if (!has("corpus.jsonl") || !has("splits.tsv")) {
    ingest();
    return;
  }
  auto parsed = corpus::parse_reviews_file(path("corpus.jsonl"), cfg_.data.rating_max);
  if (parsed.stats.skipped) fail(ErrorKind::input, path("corpus.jsonl") + " has malformed lines");
  auto in = open_in(path("splits.tsv"));
  state_->splits = corpus::read_split_manifest(in, parsed.corpus);
  state_->corpus = std::move(parsed.corpus);
}

ExtractSummary Session::extract_aspects() {
  ensure_ingested();
  for (const auto* group : {&kExtractFiles, &kGraphFiles, &kTrainFiles})
    for (const auto& f : *group) fs::remove(path(f));
  state_->graph.reset();
  state_->dataset.reset();

  const bool synth = cfg_.data.source == "synthetic";
  auto file = [&](const std::string& configured, const std::string& generated, const std::string& key) {
    if (synth && configured.empty()) return path("synthetic/" + generated);
    return config::required(configured, key);
  };
  const auto terms = aspects::read_lexicon_file(file(cfg_.data.aspect_terms, "aspect_terms.txt", "data.aspect_terms"));
  const auto pos = aspects::read_lexicon_file(file(cfg_.data.positive_lexicon, "positive.txt", "data.positive_lexicon"));
  const auto neg = aspects::read_lexicon_file(file(cfg_.data.negative_lexicon, "negative.txt", "data.negative_lexicon"));
  auto vocab = aspects::canonicalize(terms);
  aspects::LexiconExtractor extractor(vocab, {pos.begin(), pos.end()}, {neg.begin(), neg.end()},
                                      cfg_.data.sentiment_window);
  std::vector<aspects::AspectMention> mentions;
  for (const auto& r : state_->corpus->reviews) {
    auto m = aspects::extract_mentions(r, extractor);
    mentions.insert(mentions.end(), m.begin(), m.end());
  }

  ExtractSummary summary;
  std::string vectors = cfg_.data.word_vectors;
  if (synth && vectors.empty()) vectors = path("synthetic/vectors.txt");
  {
    auto f = open_out(path("synonyms.tsv"));
    if (!vectors.empty()) {
      const auto sim = aspects::VectorSimilarity::read_file(vectors);
      const auto syn = aspects::synonym_pairs(vocab, sim, cfg_.data.synonym_threshold);
      for (auto [a, b] : syn.pairs) f << vocab.term(a) << '\t' << vocab.term(b) << '\n';
      summary.synonyms = syn.pairs.size();
      summary.synonym_terms_missing = syn.skipped_missing;
    }
  }
  {
    auto f = open_out(path("aspects.txt"));
    for (const auto& t : vocab.entries()) f << t << '\n';
  }
  {
    auto f = open_out(path("mentions.tsv"));
    aspects::write_mentions(f, mentions, vocab);
  }
  summary.aspects = static_cast<std::size_t>(vocab.size());
  summary.mentions = mentions.size();
  state_->aspects = std::move(vocab);
  state_->mentions = std::move(mentions);
  record_stage("extract-aspects");
  return summary;
}

void Session::ensure_extracted() {
  ensure_ingested();
  if (state_->aspects) return;
  if (!has("aspects.txt") || !has("mentions.tsv")) {
    extract_aspects();
    return;
  }
  auto af = open_in(path("aspects.txt"));
  state_->aspects = aspects::canonicalize(aspects::read_lexicon(af));
  auto mf = open_in(path("mentions.tsv"));
  state_->mentions = aspects::read_mentions(mf, *state_->aspects);
}

GraphSummary Session::build_kg() {
  ensure_extracted();
  for (const auto& f : kTrainFiles) fs::remove(path(f));
  state_->dataset.reset();
  std::vector<std::pair<int, int>> synonyms;
  if (has("synonyms.tsv")) {
    auto in = open_in(path("synonyms.tsv"));
    std::string line;
    while (std::getline(in, line)) {
      const auto tab = line.find('\t');
      if (tab == std::string::npos) continue;
      auto a = state_->aspects->find(line.substr(0, tab));
      auto b = state_->aspects->find(line.substr(tab + 1));
      if (!a || !b) fail(ErrorKind::input, path("synonyms.tsv") + ": unknown aspect in '" + line + "'");
      synonyms.emplace_back(*a, *b);
    }
  }
  kg::GraphInputs in;
  in.corpus = &*state_->corpus;
  in.train = &state_->splits->train;
  in.mentions = state_->mentions;
  in.vocab = &*state_->aspects;
  in.synonyms = synonyms;
  state_->graph = kg::build_graph(in);
  {
    auto nodes = open_out(path("nodes.tsv"));
    auto edges = open_out(path("edges.tsv"));
    kg::serialize_graph(*state_->graph, nodes, edges);
  }
  record_stage("build-kg");
  return {state_->graph->num_nodes(), state_->graph->edges().size()};
}

void Session::ensure_graph() {
  ensure_extracted();
  if (state_->graph) return;
  if (!has("nodes.tsv") || !has("edges.tsv")) {
    build_kg();
    return;
  }
  auto nodes = open_in(path("nodes.tsv"));
  auto edges = open_in(path("edges.tsv"));
  state_->graph = kg::deserialize_graph(nodes, edges);
}

const data::Dataset& Session::dataset() {
  if (state_->dataset) return *state_->dataset;
  ensure_graph();
  text::Vocabulary vocab;
  text::TokenizerKind kind = text::TokenizerKind::word;
  if (cfg_.model.encoder == "pretrained") {
    vocab = text::Vocabulary::read_file((fs::path(cfg_.model.pretrained_dir) / "vocab.txt").string());
    kind = text::TokenizerKind::wordpiece;
    auto cls = vocab.cls_id(), sep = vocab.sep_id();
    if (!cls || !sep) fail(ErrorKind::input, "pretrained vocabulary lacks [CLS] or [SEP]");
    state_->bert->cls_id = *cls;
    state_->bert->sep_id = *sep;
  } else {
    if (!has("vocab.txt")) fail(ErrorKind::input, "run directory lacks vocab.txt; rerun ingest");
    vocab = text::Vocabulary::read_file(path("vocab.txt"));
  }
  data::PrepareOptions prep;
  prep.max_doc_tokens = static_cast<std::size_t>(cfg_.data.max_doc_tokens);
  prep.max_aspects = static_cast<std::size_t>(cfg_.data.max_aspects);
  state_->dataset = std::make_unique<data::Dataset>(*state_->corpus, *state_->splits, *state_->aspects,
                                                    state_->mentions, *state_->graph, std::move(vocab), kind, prep);
  return *state_->dataset;
}

harness::ModelHook Session::encoder_hook() const {
  if (!state_->encoder_weights) return {};
  const auto* weights = &*state_->encoder_weights;
  return [weights](model::Model& m) { m.load_encoder_weights(*weights); };
}

std::vector<std::uint64_t> Session::seeds() const {
  return cfg_.train.seeds.empty() ? std::vector<std::uint64_t>{cfg_.train.seed} : cfg_.train.seeds;
}

harness::TrainResult Session::train() {
  const auto& d = dataset();
  for (const auto& f : kTrainFiles) fs::remove(path(f));
  auto mo = harness::model_options(cfg_, d, state_->bert);
  model::apply_variant(mo, cfg_.train.variant);
  model::Model m(mo, d.graph(), cfg_.train.seed);
  if (auto hook = encoder_hook()) hook(m);

  auto to = harness::train_options(cfg_);
  if (!mo.type_loss) to.alpha = 0.0;
  auto jsonl = open_out(path("metrics.jsonl"));
  auto text = open_out(path("metrics.txt"));
  to.on_epoch = [&](const harness::EpochRecord& r) {
    nlohmann::json j{{"stage", "train"}, {"variant", cfg_.train.variant}, {"epoch", r.epoch},
                     {"train_loss", r.train_loss}, {"validation_mse", r.validation_mse}, {"seconds", r.seconds}};
    if (r.train_mse) j["train_mse"] = *r.train_mse;
    jsonl << j.dump() << '\n' << std::flush;
    text << "epoch " << r.epoch << "  loss " << r.train_loss << "  val_mse " << r.validation_mse;
    if (r.train_mse) text << "  train_mse " << *r.train_mse;
    text << '\n' << std::flush;
  };
  auto result = harness::train(m, d, to);
  std::map<std::string, std::string> meta{{"artifact_version", std::to_string(kArtifactVersion)},
                                          {"variant", cfg_.train.variant},
                                          {"seed", std::to_string(cfg_.train.seed)},
                                          {"best_epoch", std::to_string(result.best_epoch)}};
  ckpt::save_tensor_file(path("checkpoint.tensors"), ckpt::capture(m.params(), meta));
  record_stage("train");
  if (result.diverged) fail(ErrorKind::diverged, result.diagnostic);
  return result;
}

std::unique_ptr<model::Model> Session::load_model() {
  const auto& d = dataset();
  if (!has("checkpoint.tensors")) fail(ErrorKind::config, "no checkpoint in " + cfg_.run_dir + "; run train first");
  const auto file = ckpt::load_tensor_file(path("checkpoint.tensors"));
  auto it = file.meta.find("artifact_version");
  if (it == file.meta.end() || it->second != std::to_string(kArtifactVersion))
    fail(ErrorKind::version, "checkpoint artifact version " + (it == file.meta.end() ? "missing" : it->second) +
                                 "; this build reads version " + std::to_string(kArtifactVersion));
  auto mo = harness::model_options(cfg_, d, state_->bert);
  model::apply_variant(mo, file.meta.count("variant") ? file.meta.at("variant") : "full");
  auto m = std::make_unique<model::Model>(mo, d.graph(), cfg_.train.seed);
  ckpt::apply(file, m->params());
  return m;
}

harness::EvalReport Session::evaluate(corpus::SplitName split) {
  auto m = load_model();
  auto report = harness::evaluate(*m, dataset(), split);
  const auto file = ckpt::load_tensor_file(path("checkpoint.tensors"));
  if (file.meta.count("variant")) report.variant = file.meta.at("variant");
  const std::string tag = corpus::to_string(split);
  {
    auto f = open_out(path("report-" + tag + ".json"));
    f << harness::to_json(report).dump(2) << '\n';
  }
  {
    auto f = open_out(path("report-" + tag + ".txt"));
    f << harness::to_text(report);
  }
  {
    auto f = open_out(path("predictions-" + tag + ".tsv"));
    f.precision(17);
    f << "user\titem\trating\tpredicted\taspects\tcold\n";
    for (const auto& p : report.predictions)
      f << p.user << '\t' << p.item << '\t' << p.rating << '\t' << p.predicted << '\t' << p.aspects << '\t'
        << (p.cold ? 1 : 0) << '\n';
  }
  {
    auto f = open_out(path("metrics.jsonl"), true);
    f << nlohmann::json{{"stage", "evaluate"}, {"split", tag},     {"variant", report.variant},
                        {"mse", report.mse},   {"count", report.count}}
             .dump()
      << '\n';
  }
  record_stage("evaluate");
  return report;
}

namespace {

nlohmann::json variant_json(const harness::VariantResult& v) {
  nlohmann::json runs = nlohmann::json::array();
  for (std::size_t k = 0; k < v.runs.size(); ++k) {
    const auto& r = v.runs[k];
    runs.push_back({{"seed", v.seeds[k]},
                    {"test_mse", v.test_mse[k]},
                    {"best_epoch", r.best_epoch},
                    {"best_validation_mse", r.best_validation_mse},
                    {"epochs", r.history.size()},
                    {"trainable_parameters", v.trainable_parameters[k]},
                    {"min_aspect_weight", r.min_aspect_weight},
                    {"max_aspect_weight", r.max_aspect_weight},
                    {"report", harness::to_json(v.reports[k])}});
  }
  return {{"variant", v.variant}, {"mean_mse", v.mean}, {"std_mse", v.stddev}, {"runs", runs}};
}

}  // namespace

std::vector<harness::VariantResult> Session::ablate(const std::vector<std::string>& variants) {
  const auto& d = dataset();
  const auto& list = variants.empty() ? model::kVariants : variants;
  // Reject bad names before spending time on training.
  for (const auto& v : list) {
    model::ModelOptions probe;
    model::apply_variant(probe, v);
  }
  std::vector<harness::VariantResult> out;
  auto text = open_out(path("ablation.txt"));
  for (const auto& v : list) {
    out.push_back(harness::run_variant(cfg_, d, v, seeds(), state_->bert, encoder_hook()));
    auto f = open_out(path("ablation-" + v + ".json"));
    f << variant_json(out.back()).dump(2) << '\n';
    text << v << "  MSE " << out.back().mean << " +- " << out.back().stddev << "  (" << out.back().seeds.size()
         << " seeds)\n"
         << std::flush;
  }
  record_stage("ablate");
  return out;
}

std::vector<harness::SweepRow> Session::sweep(const std::vector<int>& layers) {
  const auto& d = dataset();
  auto rows = harness::sweep_rgcn_layers(cfg_, d, layers, seeds(), state_->bert, encoder_hook());
  nlohmann::json j = nlohmann::json::array();
  auto text = open_out(path("sweep.txt"));
  for (const auto& r : rows) {
    j.push_back({{"rgcn_layers", r.layers}, {"result", variant_json(r.result)}});
    text << "layers " << r.layers << "  MSE " << r.result.mean << " +- " << r.result.stddev << '\n';
  }
  auto f = open_out(path("sweep.json"));
  f << j.dump(2) << '\n';
  record_stage("sweep");
  return rows;
}

namespace {

std::vector<data::Example> pair_examples(const data::Dataset& d,
                                         const std::vector<std::pair<std::string, std::string>>& pairs) {
  std::vector<data::Example> out;
  for (const auto& [u, i] : pairs) {
    auto user = d.corpus().users.find(u);
    auto item = d.corpus().items.find(i);
    if (!user) fail(ErrorKind::input, "unknown user '" + u + "'");
    if (!item) fail(ErrorKind::input, "unknown item '" + i + "'");
    out.push_back(d.make_example(*user, *item, std::nullopt));
  }
  return out;
}

}  // namespace

std::vector<double> Session::predict(const std::vector<std::pair<std::string, std::string>>& pairs) {
  auto m = load_model();
  const auto ex = pair_examples(dataset(), pairs);
  auto y = m->predict(ex);
  auto f = open_out(path("predict.tsv"));
  f.precision(17);
  f << "user\titem\tpredicted\n";
  for (std::size_t k = 0; k < pairs.size(); ++k) f << pairs[k].first << '\t' << pairs[k].second << '\t' << y[k] << '\n';
  return y;
}

AttentionDumpSummary Session::dump_attention(corpus::SplitName split,
                                             const std::vector<std::pair<std::string, std::string>>& pairs) {
  auto m = load_model();
  if (!m->options().use_aspects) fail(ErrorKind::config, "dump-attention needs a model with the aspect branch");
  const auto& d = dataset();
  const auto ex = pairs.empty() ? d.examples(split) : pair_examples(d, pairs);
  AttentionDumpSummary summary;
  summary.path = path("attention.jsonl");
  auto f = open_out(summary.path);
  const nn::RunContext eval;
  for (const auto& e : ex) {
    const data::Example* one[] = {&e};
    const auto out = m->forward(one, eval);
    const auto& a = out.aspects.at(0);
    nlohmann::json items = nlohmann::json::array();
    for (std::size_t k = 0; k < e.bag.items.size(); ++k) {
      const auto& b = e.bag.items[k];
      nlohmann::json it{{"aspect", d.aspect_vocab().term(b.aspect)},
                        {"source", aspects::to_string(b.source)},
                        {"count", b.num},
                        {"aspect_weight", a.aspect_weights[k]},
                        {"weight", a.pool_weights[k]}};
      if (a.scores.defined()) it["score"] = a.scores.value()(static_cast<Eigen::Index>(k), 0);
      items.push_back(it);
    }
    f << nlohmann::json{{"user", d.corpus().users.label(e.user)},
                        {"item", d.corpus().items.label(e.item)},
                        {"prediction", out.predictions.value()(0, 0)},
                        {"aspects", items}}
             .dump()
      << '\n';
    ++summary.pairs;
  }
  return summary;
}

std::vector<std::pair<std::string, std::string>> read_pairs(const std::string& p) {
  auto in = open_in(p);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream s(line);
    std::string u, i;
    if (!(s >> u >> i)) fail(ErrorKind::input, p + " line " + std::to_string(n) + ": expected 'user item'");
    out.emplace_back(u, i);
  }
  return out;
}

}  // namespace kcf::session
