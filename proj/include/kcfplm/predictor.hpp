#pragma once

#include "kcfplm/nn.hpp"

#include <string>

namespace kcf::predictor {

using ad::Matrix;
using ad::Var;

enum class FuseMode { pad, project };
FuseMode fuse_mode_from_string(const std::string& s);
std::string to_string(FuseMode m);

// z = q + p', where p' is p zero-padded on the item half, or p mapped to
// the query width by a learned linear layer.
class Fuser {
 public:
  Fuser() = default;
  Fuser(nn::ParameterSet& params, const std::string& name, int model_width, FuseMode mode, std::mt19937_64& rng);
  Var fuse(const Var& query, const Var& pooled) const;
  FuseMode mode() const { return mode_; }

 private:
  FuseMode mode_ = FuseMode::pad;
  nn::Linear project_;
};

Var fuse_pad(const Var& query, const Var& pooled);

struct FmParams {
  Var bias;     // 1 x 1
  Var linear;   // n x 1
  Var factors;  // n x k
};

FmParams make_fm(nn::ParameterSet& params, const std::string& name, int inputs, int rank, std::mt19937_64& rng,
                 double init_bias = 0.0);

// Second-order factorization machine over the rows of z, via
// 0.5 * sum_f [(z V)_f^2 - (z^2 V^2)_f]. Returns rows x 1.
Var fm_predict(const Var& z, const FmParams& fm);

// Summed squared error; empty batches violate the contract.
Var mse_loss(const Var& predictions, const Eigen::VectorXd& truths);
// L_r + alpha L_t; an undefined L_t contributes nothing.
Var hybrid_loss(const Var& rating_loss, const Var& type_loss, double alpha);

double clip_rating(double y, int rating_max);

}  // namespace kcf::predictor
