#include "kcfplm/kcfplm.h"

#include "CLI11.hpp"

#include <cstdio>
#include <string>
#include <vector>

namespace {

struct Options {
  std::string config;
  std::vector<std::string> sets;
  std::string run_dir;
  std::string seeds;
  std::string split = "test";
  std::vector<std::string> variants;
  std::vector<int> layers;
  std::string user, item, pairs;
};

int report_failure(kcf_status status, const char* message) {
  std::fprintf(stderr, "kcfplm: %s: %s\n", kcf_status_name(status), message);
  return static_cast<int>(status);
}

int run(const std::string& command, const Options& o) {
  std::vector<std::string> overrides = o.sets;
  if (!o.run_dir.empty()) overrides.push_back("run.dir=" + o.run_dir);
  if (!o.seeds.empty()) overrides.push_back("train.seeds=" + o.seeds);
  std::vector<const char*> argv;
  for (const auto& s : overrides) argv.push_back(s.c_str());

  kcf_session* session = nullptr;
  kcf_status st = kcf_session_open(o.config.c_str(), argv.data(), argv.size(), &session);
  if (st != KCF_OK) return report_failure(st, kcf_last_error());

  if (command == "ingest") {
    st = kcf_ingest(session);
  } else if (command == "extract-aspects") {
    st = kcf_extract_aspects(session);
  } else if (command == "build-kg") {
    st = kcf_build_kg(session);
  } else if (command == "train") {
    st = kcf_train(session);
  } else if (command == "evaluate") {
    st = kcf_evaluate(session, o.split.c_str(), nullptr, nullptr);
  } else if (command == "ablate") {
    std::vector<const char*> names;
    for (const auto& v : o.variants) names.push_back(v.c_str());
    st = kcf_ablate(session, names.data(), names.size(), nullptr);
  } else if (command == "sweep") {
    st = kcf_sweep(session, o.layers.data(), o.layers.size(), nullptr);
  } else if (command == "predict") {
    if (!o.pairs.empty()) {
      st = kcf_predict_pairs(session, o.pairs.c_str(), nullptr);
    } else {
      st = kcf_predict(session, o.user.c_str(), o.item.c_str(), nullptr);
    }
  } else if (command == "dump-attention") {
    st = kcf_dump_attention(session, o.split.c_str(), o.pairs.empty() ? nullptr : o.pairs.c_str(), nullptr);
  }

  int code = 0;
  if (st == KCF_OK) {
    std::printf("%s\n", kcf_session_last_result(session));
  } else {
    code = report_failure(st, kcf_session_last_error(session));
  }
  kcf_session_close(session);
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-graph and review-text rating prediction pipeline"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", o.config, "INI configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("-s,--set", o.sets, "Override a configuration value, section.key=value")->take_all();
    sub->add_option("--run-dir", o.run_dir, "Run directory (overrides run.dir)");
  };

  auto* ingest = app.add_subcommand("ingest", "Parse, filter and split the review corpus");
  auto* extract = app.add_subcommand("extract-aspects", "Extract aspect mentions and synonym pairs");
  auto* build = app.add_subcommand("build-kg", "Build the knowledge graph from training data");
  auto* train = app.add_subcommand("train", "Train a model and save the best checkpoint");
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate the checkpoint on a split");
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate ablation variants");
  auto* sweep = app.add_subcommand("sweep", "Vary the number of graph propagation layers");
  auto* predict = app.add_subcommand("predict", "Predict ratings for user-item pairs");
  auto* dump = app.add_subcommand("dump-attention", "Write aspect attention weights per pair");
  for (auto* sub : {ingest, extract, build, train, evaluate, ablate, sweep, predict, dump}) common(sub);

  evaluate->add_option("--split", o.split, "train, validation or test")->capture_default_str();
  dump->add_option("--split", o.split, "train, validation or test")->capture_default_str();
  dump->add_option("--pairs", o.pairs, "File of 'user item' lines instead of a split")->check(CLI::ExistingFile);
  ablate->add_option("--variant", o.variants, "Variant to run (repeatable; default all)");
  ablate->add_option("--seeds", o.seeds, "Comma-separated seeds (overrides train.seeds)");
  sweep->add_option("--layers", o.layers, "Layer counts to try")->required()->delimiter(',');
  sweep->add_option("--seeds", o.seeds, "Comma-separated seeds (overrides train.seeds)");
  auto* user = predict->add_option("--user", o.user, "User id");
  auto* item = predict->add_option("--item", o.item, "Item id");
  auto* pairs = predict->add_option("--pairs", o.pairs, "File of 'user item' lines")->check(CLI::ExistingFile);
  user->needs(item);
  item->needs(user);
  pairs->excludes(user)->excludes(item);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "kcfplm: usage error: %s\n", e.what());
    return 64;
  }
  if (predict->parsed() && o.pairs.empty() && o.user.empty()) {
    std::fprintf(stderr, "kcfplm: usage error: predict needs --user and --item, or --pairs\n");
    return 64;
  }
  return run(app.get_subcommands().front()->get_name(), o);
}
