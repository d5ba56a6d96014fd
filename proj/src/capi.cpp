#include "kcfplm/kcfplm.h"

#include "kcfplm/aspectnet.hpp"
#include "kcfplm/error.hpp"
#include "kcfplm/kgraph.hpp"
#include "kcfplm/session.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <memory>
#include <new>
#include <string>

struct kcf_session {
  std::unique_ptr<kcf::session::Session> impl;
  std::string error;
  std::string result = "{}";
  std::string run_dir;
};

namespace {

thread_local std::string g_error;

std::string one_line(std::string s) {
  for (auto& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

kcf_status status_of(kcf::ErrorKind k) {
  switch (k) {
    case kcf::ErrorKind::input: return KCF_ERR_INPUT;
    case kcf::ErrorKind::config: return KCF_ERR_CONFIG;
    case kcf::ErrorKind::version: return KCF_ERR_VERSION;
    case kcf::ErrorKind::domain: return KCF_ERR_DOMAIN;
    case kcf::ErrorKind::empty_corpus: return KCF_ERR_EMPTY;
    case kcf::ErrorKind::diverged: return KCF_ERR_DIVERGED;
    case kcf::ErrorKind::contract: return KCF_ERR_INTERNAL;
  }
  return KCF_ERR_INTERNAL;
}

// Runs f, translating exceptions into a status and a message.
template <class F>
kcf_status guarded(std::string& error, F&& f) {
  try {
    f();
    error.clear();
    return KCF_OK;
  } catch (const kcf::Error& e) {
    error = one_line(e.what());
    return status_of(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    error = one_line(e.what());
    return KCF_ERR_INPUT;
  } catch (const std::bad_alloc&) {
    error = "out of memory";
    return KCF_ERR_INTERNAL;
  } catch (const std::exception& e) {
    error = one_line(e.what());
    return KCF_ERR_INTERNAL;
  } catch (...) {
    error = "unknown error";
    return KCF_ERR_INTERNAL;
  }
}

template <class F>
kcf_status stage(kcf_session* s, F&& f) {
  if (s == nullptr) {
    g_error = "null session";
    return KCF_ERR_INPUT;
  }
  return guarded(s->error, [&] { s->result = f(*s->impl).dump(); });
}

kcf::corpus::SplitName split_of(const char* split) {
  if (split == nullptr) return kcf::corpus::SplitName::test;
  try {
    return kcf::corpus::split_from_string(split);
  } catch (const kcf::Error&) {
    kcf::fail(kcf::ErrorKind::config, std::string("unknown split '") + split + "' (expected train, validation or test)");
  }
}

nlohmann::json variant_summary(const kcf::harness::VariantResult& v) {
  nlohmann::json mse = v.test_mse;
  nlohmann::json seeds = v.seeds;
  nlohmann::json j{{"variant", v.variant}, {"mean_mse", v.mean}, {"std_mse", v.stddev}, {"seeds", seeds},
                   {"test_mse", mse}};
  if (!v.runs.empty()) {
    double lo = v.runs[0].min_aspect_weight, hi = v.runs[0].max_aspect_weight;
    for (const auto& r : v.runs) {
      lo = std::min(lo, r.min_aspect_weight);
      hi = std::max(hi, r.max_aspect_weight);
    }
    j["min_aspect_weight"] = lo;
    j["max_aspect_weight"] = hi;
  }
  return j;
}

}  // namespace

extern "C" {

const char* kcf_version(void) { return "1.0.0"; }

int kcf_artifact_version(void) { return kcf::session::kArtifactVersion; }

const char* kcf_status_name(kcf_status status) {
  switch (status) {
    case KCF_OK: return "ok";
    case KCF_ERR_INPUT: return "input error";
    case KCF_ERR_CONFIG: return "configuration error";
    case KCF_ERR_VERSION: return "version error";
    case KCF_ERR_DOMAIN: return "domain error";
    case KCF_ERR_EMPTY: return "empty corpus";
    case KCF_ERR_DIVERGED: return "training diverged";
    case KCF_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

kcf_status kcf_session_open(const char* config_path, const char* const* overrides, size_t n_overrides,
                            kcf_session** out) {
  if (out == nullptr) {
    g_error = "kcf_session_open: null output pointer";
    return KCF_ERR_INPUT;
  }
  *out = nullptr;
  std::unique_ptr<kcf_session> s;
  const auto status = guarded(g_error, [&] {
    std::vector<std::string> ov;
    for (size_t k = 0; k < n_overrides; ++k) {
      if (overrides[k] == nullptr) kcf::fail(kcf::ErrorKind::config, "null override");
      ov.emplace_back(overrides[k]);
    }
    auto cfg = config_path ? kcf::config::load(config_path, ov) : kcf::config::parse("", ov);
    s = std::make_unique<kcf_session>();
    s->run_dir = cfg.run_dir;
    s->impl = std::make_unique<kcf::session::Session>(std::move(cfg));
  });
  if (status == KCF_OK) *out = s.release();
  return status;
}

void kcf_session_close(kcf_session* session) { delete session; }

const char* kcf_session_last_error(const kcf_session* session) {
  return session ? session->error.c_str() : g_error.c_str();
}

const char* kcf_last_error(void) { return g_error.c_str(); }

const char* kcf_session_last_result(const kcf_session* session) { return session ? session->result.c_str() : "{}"; }

const char* kcf_session_run_dir(const kcf_session* session) { return session ? session->run_dir.c_str() : ""; }

kcf_status kcf_ingest(kcf_session* session) {
  return stage(session, [](kcf::session::Session& s) {
    const auto st = s.ingest();
    nlohmann::json diag = st.diagnostics;
    return nlohmann::json{{"stage", "ingest"},       {"lines", st.lines},     {"accepted", st.accepted},
                          {"metadata", st.metadata}, {"skipped", st.skipped}, {"diagnostics", diag},
                          {"run_dir", s.run_dir()}};
  });
}

kcf_status kcf_extract_aspects(kcf_session* session) {
  return stage(session, [](kcf::session::Session& s) {
    const auto r = s.extract_aspects();
    return nlohmann::json{{"stage", "extract-aspects"},
                          {"aspects", r.aspects},
                          {"mentions", r.mentions},
                          {"synonym_pairs", r.synonyms},
                          {"synonym_terms_without_vectors", r.synonym_terms_missing}};
  });
}

kcf_status kcf_build_kg(kcf_session* session) {
  return stage(session, [](kcf::session::Session& s) {
    const auto r = s.build_kg();
    return nlohmann::json{{"stage", "build-kg"}, {"nodes", r.nodes}, {"edges", r.edges}};
  });
}

kcf_status kcf_train(kcf_session* session) {
  return stage(session, [](kcf::session::Session& s) {
    const auto r = s.train();
    nlohmann::json j{{"stage", "train"},
                     {"variant", s.config().train.variant},
                     {"epochs", r.history.size()},
                     {"best_epoch", r.best_epoch},
                     {"best_validation_mse", r.best_validation_mse},
                     {"steps", r.steps},
                     {"reached_target", r.reached_target}};
    if (!r.history.empty() && r.history.back().train_mse) j["final_train_mse"] = *r.history.back().train_mse;
    return j;
  });
}

kcf_status kcf_evaluate(kcf_session* session, const char* split, double* mse, size_t* count) {
  return stage(session, [&](kcf::session::Session& s) {
    const auto r = s.evaluate(split_of(split));
    if (mse) *mse = r.mse;
    if (count) *count = r.count;
    return kcf::harness::to_json(r);
  });
}

kcf_status kcf_ablate(kcf_session* session, const char* const* variants, size_t n_variants, double* mean_mse) {
  return stage(session, [&](kcf::session::Session& s) {
    std::vector<std::string> names;
    for (size_t k = 0; k < n_variants; ++k) {
      if (variants[k] == nullptr) kcf::fail(kcf::ErrorKind::config, "null variant name");
      names.emplace_back(variants[k]);
    }
    const auto results = s.ablate(names);
    nlohmann::json out = nlohmann::json::array();
    for (size_t k = 0; k < results.size(); ++k) {
      if (mean_mse) mean_mse[k] = results[k].mean;
      out.push_back(variant_summary(results[k]));
    }
    return nlohmann::json{{"stage", "ablate"}, {"variants", out}};
  });
}

kcf_status kcf_sweep(kcf_session* session, const int* layers, size_t n_layers, double* mean_mse) {
  return stage(session, [&](kcf::session::Session& s) {
    if (layers == nullptr && n_layers > 0) kcf::fail(kcf::ErrorKind::config, "null layer list");
    const auto rows = s.sweep(std::vector<int>(layers, layers + n_layers));
    nlohmann::json out = nlohmann::json::array();
    for (size_t k = 0; k < rows.size(); ++k) {
      if (mean_mse) mean_mse[k] = rows[k].result.mean;
      auto j = variant_summary(rows[k].result);
      j["rgcn_layers"] = rows[k].layers;
      out.push_back(j);
    }
    return nlohmann::json{{"stage", "sweep"}, {"rows", out}};
  });
}

kcf_status kcf_predict(kcf_session* session, const char* user, const char* item, double* rating) {
  return stage(session, [&](kcf::session::Session& s) {
    if (user == nullptr || item == nullptr) kcf::fail(kcf::ErrorKind::input, "predict: user and item are required");
    const auto y = s.predict({{user, item}});
    if (rating) *rating = y.at(0);
    return nlohmann::json{{"stage", "predict"}, {"user", user}, {"item", item}, {"prediction", y.at(0)}};
  });
}

kcf_status kcf_predict_pairs(kcf_session* session, const char* pairs_path, size_t* pairs) {
  return stage(session, [&](kcf::session::Session& s) {
    if (pairs_path == nullptr) kcf::fail(kcf::ErrorKind::input, "predict: pairs file is required");
    const auto list = kcf::session::read_pairs(pairs_path);
    const auto y = s.predict(list);
    if (pairs) *pairs = y.size();
    return nlohmann::json{{"stage", "predict"}, {"pairs", y.size()}, {"path", s.run_dir() + "/predict.tsv"}};
  });
}

kcf_status kcf_dump_attention(kcf_session* session, const char* split, const char* pairs_path, size_t* pairs) {
  return stage(session, [&](kcf::session::Session& s) {
    std::vector<std::pair<std::string, std::string>> list;
    if (pairs_path) list = kcf::session::read_pairs(pairs_path);
    const auto r = s.dump_attention(split_of(split), list);
    if (pairs) *pairs = r.pairs;
    return nlohmann::json{{"stage", "dump-attention"}, {"path", r.path}, {"pairs", r.pairs}};
  });
}

kcf_status kcf_aspect_weight(int num, int rating_max, double* weight) {
  return guarded(g_error, [&] {
    const double w = kcf::aspectnet::aspect_weight(num, rating_max);
    if (weight) *weight = w;
  });
}

kcf_status kcf_polarity_weights(int positive, int negative, double* good, double* bad) {
  return guarded(g_error, [&] {
    const auto w = kcf::kg::compute_polarity_weights(positive, negative);
    if (good) *good = w.good;
    if (bad) *bad = w.bad;
  });
}

}  // extern "C"
