#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "avgzsl/data.hpp"
#include "avgzsl/eval.hpp"
#include "avgzsl/trainer.hpp"

namespace avgzsl::pipeline {

/// Max relative error between analytic and central finite-difference
/// gradients of the total loss, over `n_batches` random batches of
/// `batch_size` pairs on a small random model.
double gradient_check(const losses::LossConfig& config, std::uint64_t seed,
                      std::size_t n_batches = 10, std::size_t batch_size = 8,
                      double epsilon = 1e-4);

/// The 8 loss-toggle configurations exercised by the gradient suite: each
/// term alone, then all terms on. The small default margin keeps the loss
/// magnitude (and with it the finite-difference rounding noise) low.
std::vector<std::pair<std::string, losses::LossConfig>> gradient_check_configs(double margin = 0.02);

struct AblationRow {
  std::string label;     // dropped term, or "full"
  double seen_mean = 0.0;
  double unseen_mean = 0.0;
  double hm = 0.0;
};

/// One training+eval run per toggle row (drop each of rec/cta/ctv, each of
/// ta/at/tv/vt, plus the full model), all with the same seed.
std::vector<AblationRow> ablate(const data::Dataset& dataset,
                                const model::ArchitectureSpec& arch,
                                const train::TrainConfig& base_config,
                                eval::ModalityCondition condition);

std::string render_ablation_table(const std::vector<AblationRow>& rows);

/// Architecture matching the dataset's feature dims, with default hidden
/// widths and embedding size.
model::ArchitectureSpec arch_for_dataset(const data::Dataset& dataset);

}  // namespace avgzsl::pipeline
