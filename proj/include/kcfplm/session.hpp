#pragma once

#include "kcfplm/config.hpp"
#include "kcfplm/harness.hpp"

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace kcf::session {

// Bumped whenever a run-directory file layout changes incompatibly.
inline constexpr int kArtifactVersion = 1;

struct ExtractSummary {
  std::size_t aspects = 0;
  std::size_t mentions = 0;
  std::size_t synonyms = 0;
  std::size_t synonym_terms_missing = 0;
};

struct GraphSummary {
  int nodes = 0;
  std::size_t edges = 0;
};

struct AttentionDumpSummary {
  std::string path;
  std::size_t pairs = 0;
};

// Pipeline stages over one run directory. Each stage writes its artifacts
// there; later stages read earlier artifacts back, running a missing stage
// on the way.
class Session {
 public:
  explicit Session(config::Config cfg);
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  const config::Config& config() const { return cfg_; }
  const std::string& run_dir() const { return cfg_.run_dir; }

  corpus::ParseStats ingest();
  ExtractSummary extract_aspects();
  GraphSummary build_kg();
  // Throws ErrorKind::diverged after saving the last finite parameters.
  harness::TrainResult train();
  harness::EvalReport evaluate(corpus::SplitName split = corpus::SplitName::test);
  std::vector<harness::VariantResult> ablate(const std::vector<std::string>& variants);
  std::vector<harness::SweepRow> sweep(const std::vector<int>& layers);
  // Ratings for (user label, item label) pairs from the trained checkpoint.
  std::vector<double> predict(const std::vector<std::pair<std::string, std::string>>& pairs);
  // One JSON line per pair with its aspects' weights, scores and pooling
  // weights. Pairs default to the split's examples.
  AttentionDumpSummary dump_attention(corpus::SplitName split = corpus::SplitName::test,
                                      const std::vector<std::pair<std::string, std::string>>& pairs = {});

  // Prepared data for the current config, building missing stages.
  const data::Dataset& dataset();

 private:
  struct State;
  std::string path(const std::string& name) const;
  bool has(const std::string& name) const;
  void check_manifest() const;
  void record_stage(const std::string& stage) const;
  void ensure_ingested();
  void ensure_extracted();
  void ensure_graph();
  std::unique_ptr<model::Model> load_model();
  std::vector<std::uint64_t> seeds() const;
  harness::ModelHook encoder_hook() const;

  config::Config cfg_;
  std::unique_ptr<State> state_;
};

std::vector<std::pair<std::string, std::string>> read_pairs(const std::string& path);

}  // namespace kcf::session
