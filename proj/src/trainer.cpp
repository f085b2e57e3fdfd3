#include "avgzsl/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "avgzsl/eval.hpp"

namespace avgzsl::train {

namespace {

constexpr double kMomentumBeta = 0.9;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string report_line(const LossReport& r) {
  std::ostringstream os;
  os << "l_rec=" << format_real(r.l_rec) << " l_cta=" << format_real(r.l_cta)
     << " l_ctv=" << format_real(r.l_ctv) << " l_cmd=" << format_real(r.l_cmd)
     << " l_ta=" << format_real(r.l_ta) << " l_at=" << format_real(r.l_at)
     << " l_tv=" << format_real(r.l_tv) << " l_vt=" << format_real(r.l_vt)
     << " l_ct=" << format_real(r.l_ct) << " total=" << format_real(r.total);
  return os.str();
}

void check_report_finite(const LossReport& r, std::uint64_t step) {
  const std::pair<const char*, double> terms[] = {
      {"l_rec", r.l_rec}, {"l_cta", r.l_cta}, {"l_ctv", r.l_ctv}, {"l_cmd", r.l_cmd},
      {"l_ta", r.l_ta},   {"l_at", r.l_at},   {"l_tv", r.l_tv},   {"l_vt", r.l_vt},
      {"l_ct", r.l_ct},   {"total", r.total}};
  for (const auto& [name, value] : terms) {
    if (!std::isfinite(value)) {
      throw TrainError("non-finite loss term " + std::string(name) + " at step " +
                       std::to_string(step));
    }
  }
}

}  // namespace

std::string to_string(Optimizer o) {
  switch (o) {
    case Optimizer::PlainSgd:
      return "plain-sgd";
    case Optimizer::MomentumSgd:
      return "momentum-sgd";
    case Optimizer::AdaptiveMoment:
      return "adaptive-moment";
  }
  return "?";
}

Optimizer optimizer_from_string(const std::string& s) {
  if (s == "plain-sgd") return Optimizer::PlainSgd;
  if (s == "momentum-sgd") return Optimizer::MomentumSgd;
  if (s == "adaptive-moment") return Optimizer::AdaptiveMoment;
  throw TrainError("unknown optimizer '" + s +
                   "' (expected plain-sgd|momentum-sgd|adaptive-moment)");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw TrainError("learning_rate must be > 0");
  if (epochs < 1) throw TrainError("epochs must be >= 1");
  if (batch_size < 1) throw TrainError("batch_size must be >= 1");
  if (loss.margin < 0.0) throw TrainError("margin must be >= 0");
}

std::string TrainLog::serialize() const {
  std::ostringstream os;
  const std::size_t per_epoch = epochs.empty() ? steps.size() : steps.size() / epochs.size();
  std::size_t next_step = 0;
  for (std::size_t e = 0; e < epochs.size(); ++e) {
    for (std::size_t s = 0; s < per_epoch && next_step < steps.size(); ++s, ++next_step) {
      os << "step=" << steps[next_step].step << ' ' << report_line(steps[next_step].report)
         << '\n';
    }
    os << "epoch=" << epochs[e].epoch << ' ' << report_line(epochs[e].val_report)
       << " val_hm=" << format_real(epochs[e].val_hm) << '\n';
  }
  for (; next_step < steps.size(); ++next_step) {
    os << "step=" << steps[next_step].step << ' ' << report_line(steps[next_step].report)
       << '\n';
  }
  return os.str();
}

void save_log(const TrainLog& log, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw TrainError("cannot open " + tmp);
    os << log.serialize();
    if (!os) throw TrainError("write failed on " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void optimizer_step(Vec& params, const Vec& grads, OptimizerState& state,
                    const TrainConfig& config) {
  if (grads.size() != params.size()) {
    throw tensor::DimensionError("optimizer_step", params.size(), grads.size());
  }
  const double lr = config.learning_rate;
  switch (config.optimizer) {
    case Optimizer::PlainSgd:
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
      break;
    case Optimizer::MomentumSgd: {
      if (state.momentum.empty()) state.momentum.assign(params.size(), 0.0);
      for (std::size_t i = 0; i < params.size(); ++i) {
        state.momentum[i] = kMomentumBeta * state.momentum[i] + grads[i];
        params[i] -= lr * state.momentum[i];
      }
      break;
    }
    case Optimizer::AdaptiveMoment: {
      if (state.momentum.empty()) {
        state.momentum.assign(params.size(), 0.0);
        state.second_moment.assign(params.size(), 0.0);
      }
      ++state.step_count;
      const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step_count));
      const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step_count));
      for (std::size_t i = 0; i < params.size(); ++i) {
        state.momentum[i] = kAdamBeta1 * state.momentum[i] + (1.0 - kAdamBeta1) * grads[i];
        state.second_moment[i] =
            kAdamBeta2 * state.second_moment[i] + (1.0 - kAdamBeta2) * grads[i] * grads[i];
        const double m_hat = state.momentum[i] / bc1;
        const double v_hat = state.second_moment[i] / bc2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + kAdamEps);
      }
      break;
    }
  }
}

TrainResult train(const data::Dataset& dataset, const ArchitectureSpec& arch,
                  const TrainConfig& config) {
  config.validate();
  if (dataset.splits.train.empty()) throw TrainError("train split is empty");
  const data::FeatureRecord& first = dataset.splits.train.front();
  if (first.audio.size() != arch.dim_audio_in) {
    throw TrainError("dataset audio dim " + std::to_string(first.audio.size()) +
                     " != arch dim_audio_in " + std::to_string(arch.dim_audio_in));
  }
  if (first.video.size() != arch.dim_video_in) {
    throw TrainError("dataset video dim " + std::to_string(first.video.size()) +
                     " != arch dim_video_in " + std::to_string(arch.dim_video_in));
  }
  if (dataset.manifest.text_dim != arch.dim_text_in) {
    throw TrainError("manifest text dim " + std::to_string(dataset.manifest.text_dim) +
                     " != arch dim_text_in " + std::to_string(arch.dim_text_in));
  }

  const std::uint32_t steps_per_epoch =
      config.steps_per_epoch > 0
          ? config.steps_per_epoch
          : static_cast<std::uint32_t>((dataset.splits.train.size() + config.batch_size - 1) /
                                       config.batch_size);

  ModelParams params = model::init_params(arch, config.seed);
  std::mt19937_64 sampler(config.seed ^ 0x9E3779B97F4A7C15ULL);
  OptimizerState opt_state;
  TrainResult result;

  std::uint64_t step = 0;
  for (std::uint32_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::uint32_t s = 0; s < steps_per_epoch; ++s) {
      ++step;
      const std::vector<losses::TuplePair> batch =
          data::sample_pairs(dataset.splits.train, dataset.manifest, config.batch_size, sampler);
      tensor::Tape tape;
      model::TapedModel taped(tape, params);
      LossReport report;
      tensor::VarId total;
      try {
        total = losses::total_loss_taped(taped, batch, config.loss, &report);
      } catch (const tensor::NonFiniteError& e) {
        throw TrainError("non-finite loss at step " + std::to_string(step) + ": " + e.what());
      }
      check_report_finite(report, step);
      result.log.steps.push_back({step, report});

      tape.backward(total);
      const Vec grads = taped.collect_gradients();
      Vec flat = model::flatten(params);
      optimizer_step(flat, grads, opt_state, config);
      params = model::unflatten(arch, flat);
    }

    EpochLog epoch_log;
    epoch_log.epoch = epoch;
    // held-out seen-class validation, on a deterministic per-epoch stream
    std::mt19937_64 val_rng(config.seed * 0x100000001B3ULL + epoch);
    const auto& val = dataset.splits.val;
    std::size_t val_classes = 0;
    {
      std::vector<bool> present(dataset.manifest.classes.size(), false);
      for (const auto& rec : val) {
        if (!present[rec.class_id]) {
          present[rec.class_id] = true;
          ++val_classes;
        }
      }
    }
    if (val_classes >= 2) {
      const auto val_batch = data::sample_pairs(
          val, dataset.manifest, std::min<std::size_t>(config.batch_size, val.size()), val_rng);
      epoch_log.val_report = losses::total_loss(val_batch, params, config.loss).second;
      epoch_log.val_hm = eval::gzsl_classification_eval(params, dataset.manifest, val,
                                                        eval::ModalityCondition::Both)
                             .hm;
    }
    result.log.epochs.push_back(std::move(epoch_log));

    if (!config.checkpoint_stem.empty() && config.checkpoint_every_epochs > 0 &&
        epoch % config.checkpoint_every_epochs == 0) {
      model::save_checkpoint(params, config.checkpoint_stem + ".epoch" +
                                         std::to_string(epoch) + ".avzc");
    }
  }

  result.params = std::move(params);
  return result;
}

}  // namespace avgzsl::train
