#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "avgzsl/data.hpp"
#include "avgzsl/losses.hpp"
#include "avgzsl/model.hpp"

namespace avgzsl::train {

using losses::LossConfig;
using losses::LossReport;
using model::ArchitectureSpec;
using model::ModelParams;
using tensor::Vec;

enum class Optimizer { PlainSgd, MomentumSgd, AdaptiveMoment };

std::string to_string(Optimizer o);
Optimizer optimizer_from_string(const std::string& s);

struct TrainConfig {
  std::uint32_t epochs = 30;
  std::uint32_t batch_size = 8;
  std::uint32_t steps_per_epoch = 0;  // 0 = ceil(n_train / batch_size)
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::AdaptiveMoment;
  std::uint64_t seed = 0;
  LossConfig loss;
  std::uint32_t checkpoint_every_epochs = 0;  // 0 = final only
  std::string checkpoint_stem;                // empty = no intermediate checkpoints

  void validate() const;
};

struct StepLog {
  std::uint64_t step = 0;
  LossReport report;
};

struct EpochLog {
  std::uint32_t epoch = 0;
  LossReport val_report;
  double val_hm = 0.0;
};

struct TrainLog {
  std::vector<StepLog> steps;
  std::vector<EpochLog> epochs;

  std::string serialize() const;
};

void save_log(const TrainLog& log, const std::string& path);

/// Optimizer state; momentum / second-moment buffers match the flattened
/// parameter vector.
struct OptimizerState {
  Vec momentum;
  Vec second_moment;
  std::uint64_t step_count = 0;
};

/// plain-sgd: p -= lr*g; momentum-sgd: classical momentum beta=0.9;
/// adaptive-moment: beta1=0.9, beta2=0.999, eps=1e-8 with bias correction.
void optimizer_step(Vec& params, const Vec& grads, OptimizerState& state,
                    const TrainConfig& config);

struct TrainResult {
  ModelParams params;
  TrainLog log;
};

struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Minimizes the total loss over seen-class training pairs. Deterministic
/// per (dataset, arch, config): two runs agree bit-exactly. Aborts with
/// TrainError if any loss term goes non-finite.
TrainResult train(const data::Dataset& dataset, const ArchitectureSpec& arch,
                  const TrainConfig& config);

}  // namespace avgzsl::train
