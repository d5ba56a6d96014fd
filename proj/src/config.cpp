#include "kcfplm/config.hpp"

#include "kcfplm/error.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

namespace kcf::config {

namespace {

namespace pt = boost::property_tree;

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& want) {
  fail(ErrorKind::config, "config key " + key + ": expected " + want + ", got '" + value + "'");
}

int to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long x = std::stol(v, &used);
    if (used == v.size()) return static_cast<int>(x);
  } catch (const std::exception&) {
  }
  bad_value(key, v, "an integer");
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] != '-') {
      const auto x = std::stoull(v, &used);
      if (used == v.size()) return x;
    }
  } catch (const std::exception&) {
  }
  bad_value(key, v, "an unsigned integer");
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  bad_value(key, v, "a number");
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream s(v);
  std::string part;
  while (std::getline(s, part, ',')) {
    part = trim(part);
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

template <class T>
std::string show(const T& v) {
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

template <class T>
std::string show_list(const std::vector<T>& v) {
  std::string out;
  for (const auto& x : v) out += (out.empty() ? "" : ",") + show(x);
  return out;
}

// One entry per recognised key: a setter and a printer.
struct Field {
  std::function<void(Config&, const std::string&)> set;
  std::function<std::string(const Config&)> get;
};

std::map<std::string, Field> fields(const std::string& base_dir) {
  std::map<std::string, Field> f;
  auto path_field = [&](std::string key, std::string DataConfig::*m) {
    f[key] = {[=](Config& c, const std::string& v) {
                c.data.*m = v.empty() || std::filesystem::path(v).is_absolute()
                                ? v
                                : (std::filesystem::path(base_dir) / v).lexically_normal().string();
              },
              [=](const Config& c) { return c.data.*m; }};
  };
#define KCF_INT(section, member, key)                                                             \
  f[key] = {[](Config& c, const std::string& v) { c.section.member = to_int(key, v); },          \
            [](const Config& c) { return show(c.section.member); }}
#define KCF_U64(section, member, key)                                                             \
  f[key] = {[](Config& c, const std::string& v) { c.section.member = to_u64(key, v); },          \
            [](const Config& c) { return show(c.section.member); }}
#define KCF_DBL(section, member, key)                                                             \
  f[key] = {[](Config& c, const std::string& v) { c.section.member = to_double(key, v); },       \
            [](const Config& c) { return show(c.section.member); }}
#define KCF_BOOL(section, member, key)                                                            \
  f[key] = {[](Config& c, const std::string& v) { c.section.member = to_bool(key, v); },         \
            [](const Config& c) { return std::string(c.section.member ? "true" : "false"); }}
#define KCF_STR(section, member, key)                                                             \
  f[key] = {[](Config& c, const std::string& v) { c.section.member = v; },                       \
            [](const Config& c) { return c.section.member; }}

  KCF_STR(data, source, "data.source");
  path_field("data.reviews", &DataConfig::reviews);
  KCF_INT(data, rating_max, "data.rating_max");
  KCF_INT(data, k_core, "data.k_core");
  f["data.split_ratios"] = {[](Config& c, const std::string& v) {
                              std::vector<double> r;
                              for (const auto& p : split_list(v)) r.push_back(to_double("data.split_ratios", p));
                              if (r.size() != 3) bad_value("data.split_ratios", v, "three comma-separated numbers");
                              c.data.split_ratios = r;
                            },
                            [](const Config& c) { return show_list(c.data.split_ratios); }};
  KCF_U64(data, split_seed, "data.split_seed");
  KCF_BOOL(data, stratify_by_user, "data.stratify_by_user");
  path_field("data.aspect_terms", &DataConfig::aspect_terms);
  path_field("data.positive_lexicon", &DataConfig::positive_lexicon);
  path_field("data.negative_lexicon", &DataConfig::negative_lexicon);
  path_field("data.word_vectors", &DataConfig::word_vectors);
  KCF_INT(data, sentiment_window, "data.sentiment_window");
  KCF_DBL(data, synonym_threshold, "data.synonym_threshold");
  KCF_INT(data, max_aspects, "data.max_aspects");
  KCF_INT(data, max_doc_tokens, "data.max_doc_tokens");
  KCF_INT(data, vocab_min_count, "data.vocab_min_count");
  KCF_INT(data, vocab_max_size, "data.vocab_max_size");

  KCF_INT(synthetic, users, "synthetic.users");
  KCF_INT(synthetic, items, "synthetic.items");
  KCF_INT(synthetic, aspects, "synthetic.aspects");
  KCF_INT(synthetic, interactions, "synthetic.interactions");
  KCF_INT(synthetic, preferred_per_user, "synthetic.preferred_per_user");
  KCF_INT(synthetic, aspects_per_item, "synthetic.aspects_per_item");
  KCF_INT(synthetic, latent_dim, "synthetic.latent_dim");
  KCF_DBL(synthetic, latent_scale, "synthetic.latent_scale");
  KCF_DBL(synthetic, aspect_bonus, "synthetic.aspect_bonus");
  KCF_DBL(synthetic, aspect_spread, "synthetic.aspect_spread");
  KCF_DBL(synthetic, noise, "synthetic.noise");
  KCF_INT(synthetic, mentions_per_review, "synthetic.mentions_per_review");
  KCF_U64(synthetic, seed, "synthetic.seed");

  KCF_STR(model, encoder, "model.encoder");
  f["model.pretrained_dir"] = {[=](Config& c, const std::string& v) {
                                 c.model.pretrained_dir =
                                     v.empty() || std::filesystem::path(v).is_absolute()
                                         ? v
                                         : (std::filesystem::path(base_dir) / v).lexically_normal().string();
                               },
                               [](const Config& c) { return c.model.pretrained_dir; }};
  KCF_INT(model, d_model, "model.d_model");
  KCF_INT(model, d_kg, "model.d_kg");
  KCF_INT(model, rgcn_layers, "model.rgcn_layers");
  KCF_INT(model, transformer_layers, "model.transformer_layers");
  KCF_INT(model, transformer_heads, "model.transformer_heads");
  KCF_INT(model, k_fm, "model.k_fm");
  KCF_STR(model, fuse, "model.fuse");
  KCF_INT(model, encoder_layers, "model.encoder_layers");
  KCF_INT(model, encoder_heads, "model.encoder_heads");
  KCF_DBL(model, dropout, "model.dropout");
  KCF_BOOL(model, clip_predictions, "model.clip_predictions");
  KCF_BOOL(model, sampled_type_loss, "model.sampled_type_loss");

  KCF_DBL(train, learning_rate, "train.learning_rate");
  KCF_INT(train, batch_size, "train.batch_size");
  KCF_INT(train, max_epochs, "train.max_epochs");
  KCF_DBL(train, alpha, "train.alpha");
  KCF_INT(train, patience, "train.patience");
  KCF_BOOL(train, early_stopping, "train.early_stopping");
  KCF_DBL(train, target_train_mse, "train.target_train_mse");
  KCF_BOOL(train, track_train_mse, "train.track_train_mse");
  KCF_U64(train, seed, "train.seed");
  f["train.seeds"] = {[](Config& c, const std::string& v) {
                        c.train.seeds.clear();
                        for (const auto& p : split_list(v)) c.train.seeds.push_back(to_u64("train.seeds", p));
                      },
                      [](const Config& c) { return show_list(c.train.seeds); }};
  KCF_STR(train, variant, "train.variant");

  f["run.dir"] = {[=](Config& c, const std::string& v) {
                    c.run_dir = std::filesystem::path(v).is_absolute()
                                    ? v
                                    : (std::filesystem::path(base_dir) / v).lexically_normal().string();
                  },
                  [](const Config& c) { return c.run_dir; }};
#undef KCF_INT
#undef KCF_U64
#undef KCF_DBL
#undef KCF_BOOL
#undef KCF_STR
  return f;
}

void set_key(Config& cfg, const std::map<std::string, Field>& table, const std::string& key, const std::string& value) {
  auto it = table.find(key);
  if (it == table.end()) fail(ErrorKind::config, "unknown config key " + key);
  it->second.set(cfg, trim(value));
}

void validate(const Config& c) {
  auto positive = [](int v, const char* key) {
    if (v <= 0) fail(ErrorKind::config, std::string("config key ") + key + " must be positive");
  };
  positive(c.model.d_model, "model.d_model");
  positive(c.model.d_kg, "model.d_kg");
  positive(c.model.rgcn_layers, "model.rgcn_layers");
  positive(c.model.transformer_layers, "model.transformer_layers");
  positive(c.model.transformer_heads, "model.transformer_heads");
  positive(c.model.k_fm, "model.k_fm");
  positive(c.model.encoder_layers, "model.encoder_layers");
  positive(c.model.encoder_heads, "model.encoder_heads");
  positive(c.train.batch_size, "train.batch_size");
  positive(c.train.max_epochs, "train.max_epochs");
  positive(c.train.patience, "train.patience");
  positive(c.data.max_aspects, "data.max_aspects");
  positive(c.data.max_doc_tokens, "data.max_doc_tokens");
  if (c.data.rating_max < 2) fail(ErrorKind::config, "config key data.rating_max must be at least 2");
  if (!(c.train.learning_rate > 0)) fail(ErrorKind::config, "config key train.learning_rate must be positive");
  if (!(c.train.alpha >= 0)) fail(ErrorKind::config, "config key train.alpha must be nonnegative");
  if (!(c.model.dropout >= 0 && c.model.dropout < 1))
    fail(ErrorKind::config, "config key model.dropout must lie in [0, 1)");
  if (c.model.encoder != "compact" && c.model.encoder != "pretrained")
    fail(ErrorKind::config, "config key model.encoder must be compact or pretrained");
  if (c.model.fuse != "pad" && c.model.fuse != "project")
    fail(ErrorKind::config, "config key model.fuse must be pad or project");
  if (c.data.source != "file" && c.data.source != "synthetic")
    fail(ErrorKind::config, "config key data.source must be file or synthetic");
  if (!(c.synthetic.aspect_spread >= 0 && c.synthetic.aspect_spread <= 1))
    fail(ErrorKind::config, "config key synthetic.aspect_spread must lie in [0, 1]");
  if (!(c.synthetic.noise >= 0)) fail(ErrorKind::config, "config key synthetic.noise must be nonnegative");
  if (c.model.d_model % c.model.transformer_heads != 0)
    fail(ErrorKind::config, "model.d_model must be divisible by model.transformer_heads");
  if (c.model.d_model % c.model.encoder_heads != 0)
    fail(ErrorKind::config, "model.d_model must be divisible by model.encoder_heads");
}

}  // namespace

Config parse(const std::string& ini_text, const std::vector<std::string>& overrides, const std::string& base_dir) {
  Config cfg;
  const auto table = fields(base_dir);
  cfg.run_dir = (std::filesystem::path(base_dir) / "run").lexically_normal().string();
  pt::ptree tree;
  std::istringstream in(ini_text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorKind::config, std::string("config: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      fail(ErrorKind::config, "config key " + section + " must live inside a section");
    for (const auto& [key, value] : body) set_key(cfg, table, section + "." + key, value.data());
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) fail(ErrorKind::config, "override '" + o + "' is not of the form section.key=value");
    set_key(cfg, fields("."), trim(o.substr(0, eq)), o.substr(eq + 1));
  }
  validate(cfg);
  return cfg;
}

Config load(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::config, "cannot open config file: " + path);
  std::stringstream s;
  s << in.rdbuf();
  auto dir = std::filesystem::path(path).parent_path();
  Config cfg = parse(s.str(), overrides, dir.empty() ? "." : dir.string());
  cfg.source_path = path;
  return cfg;
}

void apply_override(Config& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    fail(ErrorKind::config, "override '" + assignment + "' is not of the form section.key=value");
  set_key(cfg, fields("."), trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
  validate(cfg);
}

std::string to_ini(const Config& cfg) {
  std::map<std::string, std::map<std::string, std::string>> sections;
  for (const auto& [key, f] : fields(".")) {
    const auto dot = key.find('.');
    sections[key.substr(0, dot)][key.substr(dot + 1)] = f.get(cfg);
  }
  std::ostringstream out;
  for (const auto& [section, keys] : sections) {
    out << '[' << section << "]\n";
    for (const auto& [k, v] : keys) out << k << " = " << v << '\n';
    out << '\n';
  }
  return out.str();
}

const std::string& required(const std::string& value, const std::string& key) {
  if (value.empty()) fail(ErrorKind::config, "missing config key " + key);
  return value;
}

}  // namespace kcf::config
