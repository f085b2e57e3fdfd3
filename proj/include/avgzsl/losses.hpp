#pragma once

#include <cstdint>
#include <span>
#include <utility>

#include "avgzsl/model.hpp"
#include "avgzsl/tensor.hpp"

namespace avgzsl::losses {

using model::ModelParams;
using tensor::Tape;
using tensor::VarId;
using tensor::Vec;

/// One multi-modal training tuple: extracted features plus class label.
struct Tuple {
  std::uint32_t class_id = 0;
  Vec audio;
  Vec video;
  Vec text;
};

/// Two tuples with differing class labels.
struct TuplePair {
  Tuple p;
  Tuple q;
};

struct LossConfig {
  double margin = 1.0;
  bool use_rec = true;
  bool use_cta = true;
  bool use_ctv = true;
  bool use_ta = true;
  bool use_at = true;
  bool use_tv = true;
  bool use_vt = true;
};

/// Per-batch mean of every loss term. Disabled terms are reported as 0, so
/// l_cmd = l_rec + l_cta + l_ctv, l_ct = l_tv + l_vt + l_ta + l_at and
/// total = l_cmd + l_ct hold exactly.
struct LossReport {
  double l_rec = 0, l_cta = 0, l_ctv = 0, l_cmd = 0;
  double l_ta = 0, l_at = 0, l_tv = 0, l_vt = 0, l_ct = 0;
  double total = 0;
};

/// Mean over coordinates of (u_i - v_i)^2.
double mse_distance(const Vec& u, const Vec& v);

/// max(0, d_pos - d_neg + margin).
double triplet_hinge(double d_pos, double d_neg, double margin);

// Per-pair loss terms, evaluated without a tape.
double loss_rec(const TuplePair& pair, const ModelParams& params);
double loss_cta(const TuplePair& pair, const ModelParams& params, double margin);
double loss_ctv(const TuplePair& pair, const ModelParams& params, double margin);
double loss_cmd(const TuplePair& pair, const ModelParams& params, const LossConfig& config);
double loss_ta(const TuplePair& pair, const ModelParams& params, double margin);
double loss_at(const TuplePair& pair, const ModelParams& params, double margin);
double loss_tv(const TuplePair& pair, const ModelParams& params, double margin);
double loss_vt(const TuplePair& pair, const ModelParams& params, double margin);
double loss_ct(const TuplePair& pair, const ModelParams& params, const LossConfig& config);

/// Batch mean of the total loss, untaped.
std::pair<double, LossReport> total_loss(std::span<const TuplePair> batch,
                                         const ModelParams& params,
                                         const LossConfig& config);

/// Batch mean of the total loss recorded on the tape bound to `taped`;
/// the returned scalar is differentiable with Tape::backward.
VarId total_loss_taped(model::TapedModel& taped, std::span<const TuplePair> batch,
                       const LossConfig& config, LossReport* report = nullptr);

struct BatchError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

}  // namespace avgzsl::losses
