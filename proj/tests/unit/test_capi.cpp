// Exercises the shared library through its C header and the CLI binary.

#include "doctest.h"

#include "kcfplm/kcfplm.h"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

namespace fs = std::filesystem;

namespace {

std::string data_dir() {
  const char* d = std::getenv("KCF_TEST_DATA");
  return d ? d : "tests/data";
}

std::string scratch(const std::string& tag) {
  auto p = fs::temp_directory_path() / ("kcf_capi_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

std::vector<std::string> fixture_overrides(const std::string& run_dir) {
  const std::string f = data_dir() + "/fixture/";
  return {"data.reviews=" + f + "reviews.jsonl",
          "data.aspect_terms=" + f + "aspect_terms.txt",
          "data.positive_lexicon=" + f + "positive.txt",
          "data.negative_lexicon=" + f + "negative.txt",
          "data.word_vectors=" + f + "vectors.txt",
          "data.split_seed=3",
          "data.max_doc_tokens=48",
          "model.d_model=8",
          "model.d_kg=8",
          "model.transformer_layers=1",
          "model.transformer_heads=2",
          "model.encoder_layers=1",
          "model.encoder_heads=2",
          "model.k_fm=4",
          "train.max_epochs=2",
          "train.batch_size=4",
          "train.learning_rate=1e-3",
          "run.dir=" + run_dir};
}

kcf_session* open(const std::vector<std::string>& overrides) {
  std::vector<const char*> argv;
  for (const auto& s : overrides) argv.push_back(s.c_str());
  kcf_session* s = nullptr;
  REQUIRE(kcf_session_open(nullptr, argv.data(), argv.size(), &s) == KCF_OK);
  REQUIRE(s != nullptr);
  return s;
}

nlohmann::json result(const kcf_session* s) { return nlohmann::json::parse(kcf_session_last_result(s)); }

struct Shell {
  int code = -1;
  std::string out;
  std::string err;
};

Shell run_cli(const std::string& args, const std::string& dir) {
  const std::string out = dir + "/stdout.txt", err = dir + "/stderr.txt";
  const std::string cmd = std::string(KCF_CLI_PATH) + " " + args + " >" + out + " 2>" + err;
  const int raw = std::system(cmd.c_str());
  Shell s;
  s.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  auto slurp = [](const std::string& p) {
    std::ifstream f(p);
    return std::string(std::istreambuf_iterator<char>(f), {});
  };
  s.out = slurp(out);
  s.err = slurp(err);
  return s;
}

}  // namespace

TEST_CASE("stateless helpers and status names") {
  double w = 0;
  CHECK(kcf_aspect_weight(0, 5, &w) == KCF_OK);
  CHECK(w == 1.0);
  CHECK(kcf_aspect_weight(1, 5, &w) == KCF_OK);
  CHECK(std::abs(w - 2.848469) < 1e-5);
  CHECK(kcf_aspect_weight(-1, 5, &w) == KCF_ERR_DOMAIN);
  CHECK(std::string(kcf_last_error()).find("num") != std::string::npos);

  double g = 0, b = 0;
  CHECK(kcf_polarity_weights(3, 1, &g, &b) == KCF_OK);
  CHECK(g == 0.75);
  CHECK(b == 0.25);
  CHECK(kcf_polarity_weights(0, 0, &g, &b) == KCF_ERR_DOMAIN);

  CHECK(std::string(kcf_status_name(KCF_ERR_VERSION)) == "version error");
  CHECK(kcf_artifact_version() == 1);
  CHECK(kcf_ingest(nullptr) == KCF_ERR_INPUT);
  CHECK(kcf_session_open(nullptr, nullptr, 0, nullptr) == KCF_ERR_INPUT);

  const char* bad[] = {"train.nonsense=1"};
  kcf_session* s = nullptr;
  CHECK(kcf_session_open(nullptr, bad, 1, &s) == KCF_ERR_CONFIG);
  CHECK(s == nullptr);
  CHECK(std::string(kcf_last_error()) == "unknown config key train.nonsense");
}

TEST_CASE("pipeline through the C API") {
  const auto dir = scratch("pipeline");
  kcf_session* s = open(fixture_overrides(dir));
  CHECK(std::string(kcf_session_run_dir(s)) == dir);

  REQUIRE(kcf_ingest(s) == KCF_OK);
  CHECK(result(s)["accepted"] == 32);
  CHECK(result(s)["skipped"] == 1);
  REQUIRE(kcf_extract_aspects(s) == KCF_OK);
  CHECK(result(s)["aspects"] == 12);
  REQUIRE(kcf_build_kg(s) == KCF_OK);
  REQUIRE(kcf_train(s) == KCF_OK);
  CHECK(result(s)["epochs"] == 2);

  double mse = -1;
  size_t count = 0;
  REQUIRE(kcf_evaluate(s, "test", &mse, &count) == KCF_OK);
  CHECK(count == 3);
  CHECK(mse >= 0);
  CHECK(result(s)["buckets"].size() == 5);
  CHECK(kcf_evaluate(s, "holdout", nullptr, nullptr) == KCF_ERR_CONFIG);

  double y = 0;
  CHECK(kcf_predict(s, "u0", "jacket", &y) == KCF_OK);
  CHECK(std::isfinite(y));
  CHECK(kcf_predict(s, "nobody", "jacket", &y) == KCF_ERR_INPUT);
  CHECK(std::string(kcf_session_last_error(s)).find("nobody") != std::string::npos);

  size_t pairs = 0;
  REQUIRE(kcf_dump_attention(s, "train", nullptr, &pairs) == KCF_OK);
  CHECK(pairs > 0);
  std::ifstream dump(dir + "/attention.jsonl");
  std::string line;
  size_t lines = 0, with_aspects = 0;
  while (std::getline(dump, line)) {
    ++lines;
    const auto j = nlohmann::json::parse(line);
    if (j["aspects"].empty()) continue;
    ++with_aspects;
    double sum = 0;
    for (const auto& a : j["aspects"]) sum += a["weight"].get<double>();
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
  CHECK(lines == pairs);
  CHECK(with_aspects > 0);

  const char* variants[] = {"wo_weight"};
  double means[1] = {0};
  REQUIRE(kcf_ablate(s, variants, 1, means) == KCF_OK);
  const auto ab = result(s)["variants"][0];
  CHECK(ab["variant"] == "wo_weight");
  CHECK(ab["min_aspect_weight"] == 1.0);
  CHECK(ab["max_aspect_weight"] == 1.0);
  CHECK(means[0] == ab["mean_mse"].get<double>());
  const auto report = nlohmann::json::parse(std::ifstream(dir + "/ablation-wo_weight.json"));
  CHECK(report.dump().find("wo_weight") != std::string::npos);

  const char* unknown[] = {"wo_everything"};
  CHECK(kcf_ablate(s, unknown, 1, nullptr) == KCF_ERR_CONFIG);
  kcf_session_close(s);

  // A run directory from a different artifact version is refused.
  {
    std::ifstream in(dir + "/manifest.json");
    auto m = nlohmann::json::parse(in);
    m["artifact_version"] = 99;
    std::ofstream(dir + "/manifest.json") << m.dump();
  }
  s = open(fixture_overrides(dir));
  CHECK(kcf_evaluate(s, "test", nullptr, nullptr) == KCF_ERR_VERSION);
  kcf_session_close(s);
  fs::remove_all(dir);
}

TEST_CASE("a failed ingest leaves the previous run intact") {
  const auto dir = scratch("keep");
  kcf_session* s = open(fixture_overrides(dir));
  REQUIRE(kcf_ingest(s) == KCF_OK);
  kcf_session_close(s);
  auto broken = fixture_overrides(dir);
  broken.push_back("data.reviews=");
  s = open(broken);
  CHECK(kcf_ingest(s) == KCF_ERR_CONFIG);
  CHECK(std::string(kcf_session_last_error(s)) == "missing config key data.reviews");
  kcf_session_close(s);
  CHECK(fs::exists(dir + "/corpus.jsonl"));
  CHECK(fs::exists(dir + "/manifest.json"));
  fs::remove_all(dir);
}

TEST_CASE("command line") {
  const auto dir = scratch("cli");
  {
    std::map<std::string, std::string> sections;
    for (const auto& o : fixture_overrides(dir + "/run")) {
      const auto dot = o.find('.'), eq = o.find('=');
      sections[o.substr(0, dot)] += o.substr(dot + 1, eq - dot - 1) + " = " + o.substr(eq + 1) + "\n";
    }
    std::ofstream f(dir + "/run.ini");
    for (const auto& [name, body] : sections) f << "[" << name << "]\n" << body;
  }
  const std::string c = " -c " + dir + "/run.ini";

  auto r = run_cli("ingest" + c, dir);
  CHECK(r.code == 0);
  CHECK(nlohmann::json::parse(r.out)["accepted"] == 32);
  r = run_cli("train" + c + " -s train.max_epochs=1", dir);
  CHECK(r.code == 0);
  CHECK(nlohmann::json::parse(r.out)["epochs"] == 1);
  r = run_cli("evaluate" + c + " --split validation", dir);
  CHECK(r.code == 0);
  CHECK(nlohmann::json::parse(r.out)["split"] == "validation");
  CHECK(fs::exists(dir + "/run/report-validation.json"));

  r = run_cli("predict" + c + " --user nobody --item jacket", dir);
  CHECK(r.code == 1);
  CHECK(r.err.rfind("kcfplm: input error: ", 0) == 0);
  r = run_cli("train" + c + " -s train.nonsense=1", dir);
  CHECK(r.code == 2);
  CHECK(r.err == "kcfplm: configuration error: unknown config key train.nonsense\n");
  r = run_cli("sweep" + c + " --layers 0", dir);
  CHECK(r.code == 2);
  r = run_cli("", dir);
  CHECK(r.code == 64);
  r = run_cli("predict" + c, dir);
  CHECK(r.code == 64);
  fs::remove_all(dir);
}
