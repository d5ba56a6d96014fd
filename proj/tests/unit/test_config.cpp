#include "doctest.h"

#include "kcfplm/config.hpp"
#include "kcfplm/error.hpp"

#include <filesystem>
#include <fstream>
#include <functional>

using namespace kcf;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::contract;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("defaults without a file") {
  const auto c = config::parse("");
  CHECK(c.train.learning_rate == doctest::Approx(6e-5));
  CHECK(c.train.alpha == doctest::Approx(0.2));
  CHECK(c.train.patience == 5);
  CHECK(c.train.batch_size == 12);
  CHECK(c.model.k_fm == 10);
  CHECK(c.model.encoder == "compact");
  CHECK(c.data.split_ratios == std::vector<double>{8, 1, 1});
}

TEST_CASE("sections, values and overrides") {
  const std::string ini =
      "[data]\nrating_max = 10\nsplit_ratios = 7,2,1\n"
      "[model]\nd_model = 16\ntransformer_heads = 2\nencoder_heads = 2\nclip_predictions = true\n"
      "[train]\nseeds = 4,5\nvariant = wo_kg\n";
  const auto c = config::parse(ini, {"train.alpha=0.5", "model.d_model = 32"});
  CHECK(c.data.rating_max == 10);
  CHECK(c.data.split_ratios == std::vector<double>{7, 2, 1});
  CHECK(c.model.d_model == 32);
  CHECK(c.model.clip_predictions);
  CHECK(c.train.seeds == std::vector<std::uint64_t>{4, 5});
  CHECK(c.train.variant == "wo_kg");
  CHECK(c.train.alpha == doctest::Approx(0.5));
}

TEST_CASE("later overrides win") {
  const auto c = config::parse("", {"train.max_epochs=3", "train.max_epochs=9"});
  CHECK(c.train.max_epochs == 9);
}

TEST_CASE("configuration errors name the key") {
  CHECK(kind_of([] { config::parse("[train]\nnonsense = 1\n"); }) == ErrorKind::config);
  CHECK(message_of([] { config::parse("[train]\nnonsense = 1\n"); }).find("train.nonsense") != std::string::npos);
  CHECK(message_of([] { config::parse("[train]\nbatch_size = many\n"); }).find("train.batch_size") !=
        std::string::npos);
  CHECK(kind_of([] { config::parse("", {"train.alpha"}); }) == ErrorKind::config);
  CHECK(kind_of([] { config::parse("", {"train.alpha=-1"}); }) == ErrorKind::config);
  CHECK(kind_of([] { config::parse("", {"model.dropout=1"}); }) == ErrorKind::config);
  CHECK(kind_of([] { config::parse("", {"model.encoder=giant"}); }) == ErrorKind::config);
  CHECK(kind_of([] { config::parse("", {"model.d_model=10"}); }) == ErrorKind::config);
  CHECK(kind_of([] { config::parse("", {"synthetic.aspect_spread=2"}); }) == ErrorKind::config);
  CHECK(kind_of([] { config::load("/nonexistent/x.ini"); }) == ErrorKind::config);
  CHECK(message_of([] { config::required("", "data.reviews"); }) == "missing config key data.reviews");
}

TEST_CASE("paths in a file resolve against its directory, overrides against the working directory") {
  const auto dir = std::filesystem::temp_directory_path() / "kcf_config_paths";
  std::filesystem::create_directories(dir / "conf");
  const auto file = dir / "conf" / "a.ini";
  {
    std::ofstream f(file);
    f << "[data]\nreviews = ../data/r.jsonl\n[run]\ndir = out\n";
  }
  const auto c = config::load(file.string());
  CHECK(c.data.reviews == (dir / "data" / "r.jsonl").string());
  CHECK(c.run_dir == (dir / "conf" / "out").string());
  CHECK(c.source_path == file.string());

  const auto o = config::load(file.string(), {"data.reviews=x/r.jsonl", "data.aspect_terms=/abs/t.txt"});
  CHECK(o.data.reviews == "x/r.jsonl");
  CHECK(o.data.aspect_terms == "/abs/t.txt");
  std::filesystem::remove_all(dir);
}

TEST_CASE("to_ini round trip") {
  const auto a = config::parse("", {"model.d_model=48", "model.transformer_heads=3", "model.encoder_heads=3",
                                    "train.seeds=1,2,3", "data.split_ratios=6,2,2", "synthetic.noise=0.125",
                                    "train.learning_rate=0.00025", "data.split_seed=18446744073709551615"});
  const auto b = config::parse(config::to_ini(a));
  CHECK(config::to_ini(b) == config::to_ini(a));
  CHECK(b.model.d_model == 48);
  CHECK(b.train.seeds == a.train.seeds);
  CHECK(b.data.split_ratios == a.data.split_ratios);
  CHECK(b.synthetic.noise == a.synthetic.noise);
  CHECK(b.train.learning_rate == a.train.learning_rate);
  CHECK(b.data.split_seed == a.data.split_seed);
}
