#include "kcfplm/predictor.hpp"

#include "kcfplm/error.hpp"

#include <algorithm>
#include <cmath>

namespace kcf::predictor {

FuseMode fuse_mode_from_string(const std::string& s) {
  if (s == "pad") return FuseMode::pad;
  if (s == "project") return FuseMode::project;
  fail(ErrorKind::config, "unknown fuse mode '" + s + "' (expected pad or project)");
}

std::string to_string(FuseMode m) { return m == FuseMode::pad ? "pad" : "project"; }

Fuser::Fuser(nn::ParameterSet& params, const std::string& name, int model_width, FuseMode mode, std::mt19937_64& rng)
    : mode_(mode) {
  if (mode == FuseMode::project) project_ = nn::Linear(params, name + ".project", model_width, 2 * model_width, rng);
}

Var fuse_pad(const Var& query, const Var& pooled) {
  require(query.rows() == pooled.rows() && query.cols() == 2 * pooled.cols(),
          "fuse: query must be twice the pooled width");
  return query + ad::concat_cols(pooled, ad::zeros(pooled.rows(), pooled.cols()));
}

Var Fuser::fuse(const Var& query, const Var& pooled) const {
  if (mode_ == FuseMode::pad) return fuse_pad(query, pooled);
  require(query.rows() == pooled.rows(), "fuse: row count mismatch");
  return query + project_.forward(pooled);
}

FmParams make_fm(nn::ParameterSet& params, const std::string& name, int inputs, int rank, std::mt19937_64& rng,
                 double init_bias) {
  require(inputs >= 1 && rank >= 1, "factorization machine needs positive input width and rank");
  FmParams fm;
  fm.bias = params.add(name + ".w0", Matrix::Constant(1, 1, init_bias));
  fm.linear = params.add(name + ".w", nn::uniform_matrix(inputs, 1, 1.0 / std::sqrt(1.0 * inputs), rng));
  fm.factors = params.add(name + ".V", nn::normal_matrix(inputs, rank, 0.01, rng));
  return fm;
}

Var fm_predict(const Var& z, const FmParams& fm) {
  require(z.cols() == fm.linear.rows(), "fm_predict: input width does not match the parameters");
  const Var zv = ad::matmul(z, fm.factors);
  const Var z2v2 = ad::matmul(ad::mul(z, z), ad::mul(fm.factors, fm.factors));
  const Var ones = ad::constant(Matrix::Ones(fm.factors.cols(), 1));
  const Var pair = ad::scale(ad::matmul(ad::mul(zv, zv) - z2v2, ones), 0.5);
  return ad::add_row(ad::matmul(z, fm.linear) + pair, fm.bias);
}

Var mse_loss(const Var& predictions, const Eigen::VectorXd& truths) {
  require(predictions.rows() >= 1, "mse_loss: empty batch");
  require(predictions.cols() == 1 && predictions.rows() == truths.size(), "mse_loss: length mismatch");
  const Var diff = predictions - ad::constant(truths);
  return ad::sum(ad::mul(diff, diff));
}

Var hybrid_loss(const Var& rating_loss, const Var& type_loss, double alpha) {
  if (!(alpha >= 0.0)) fail(ErrorKind::domain, "alpha must be nonnegative");
  if (!type_loss.defined() || alpha == 0.0) return rating_loss;
  return rating_loss + ad::scale(type_loss, alpha);
}

double clip_rating(double y, int rating_max) { return std::clamp(y, 1.0, static_cast<double>(rating_max)); }

}  // namespace kcf::predictor
