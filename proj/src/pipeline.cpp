#include "avgzsl/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <sstream>

namespace avgzsl::pipeline {

namespace {

/// Small shapes keep the finite-difference sweep fast.
model::ArchitectureSpec grad_check_arch() {
  model::ArchitectureSpec arch;
  arch.dim_audio_in = 10;
  arch.dim_video_in = 9;
  arch.dim_text_in = 7;
  arch.embed_dim = 5;
  arch.hidden_audio = 8;
  arch.hidden_video = 6;
  arch.hidden_decoder = 6;
  return arch;
}

/// Generic random parameters for derivative checks. Zero biases would put
/// relu pre-activations exactly at the kink, where the subgradient and a
/// central difference legitimately disagree.
/// Scales are kept small so that the loss magnitude stays ~0.1: the
/// finite-difference oracle's rounding noise is ulp(loss)/(2ε), which the
/// 1e-8 floor in relative_error amplifies on the coordinates whose true
/// gradient is exactly zero (e.g. the decoder output bias cancels in the
/// cross-text terms).
model::ModelParams random_params(const model::ArchitectureSpec& arch, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 0.4);
  tensor::Vec flat(model::param_count(arch));
  for (double& x : flat) x = normal(rng);
  return model::unflatten(arch, flat);
}

std::vector<losses::TuplePair> random_batch(const model::ArchitectureSpec& arch,
                                            std::size_t batch_size, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 0.25);
  auto random_vec = [&](std::size_t n) {
    tensor::Vec v(n);
    for (double& x : v) x = normal(rng);
    return v;
  };
  std::vector<losses::TuplePair> batch(batch_size);
  for (losses::TuplePair& pair : batch) {
    pair.p.class_id = 0;
    pair.p.audio = random_vec(arch.dim_audio_in);
    pair.p.video = random_vec(arch.dim_video_in);
    pair.p.text = random_vec(arch.dim_text_in);
    pair.q.class_id = 1;
    pair.q.audio = random_vec(arch.dim_audio_in);
    pair.q.video = random_vec(arch.dim_video_in);
    pair.q.text = random_vec(arch.dim_text_in);
  }
  return batch;
}

}  // namespace

double gradient_check(const losses::LossConfig& config, std::uint64_t seed,
                      std::size_t n_batches, std::size_t batch_size, double epsilon) {
  const model::ArchitectureSpec arch = grad_check_arch();
  std::mt19937_64 rng(seed);
  double max_rel_err = 0.0;
  for (std::size_t b = 0; b < n_batches; ++b) {
    const model::ModelParams params = random_params(arch, rng);
    const std::vector<losses::TuplePair> batch = random_batch(arch, batch_size, rng);

    tensor::Tape tape;
    model::TapedModel taped(tape, params);
    const tensor::VarId total = losses::total_loss_taped(taped, batch, config);
    tape.backward(total);
    const tensor::Vec analytic = taped.collect_gradients();

    const tensor::Vec numeric = tensor::finite_diff_gradient(
        [&](const tensor::Vec& flat) {
          return losses::total_loss(batch, model::unflatten(arch, flat), config).first;
        },
        model::flatten(params), epsilon);

    for (std::size_t i = 0; i < analytic.size(); ++i) {
      max_rel_err = std::max(max_rel_err, tensor::relative_error(analytic[i], numeric[i]));
    }
  }
  return max_rel_err;
}

std::vector<std::pair<std::string, losses::LossConfig>> gradient_check_configs(double margin) {
  losses::LossConfig off;
  off.margin = margin;
  off.use_rec = off.use_cta = off.use_ctv = false;
  off.use_ta = off.use_at = off.use_tv = off.use_vt = false;

  std::vector<std::pair<std::string, losses::LossConfig>> configs;
  auto only = [&off](const std::string& name, auto setter) {
    losses::LossConfig c = off;
    setter(c);
    return std::make_pair(name, c);
  };
  configs.push_back(only("rec", [](losses::LossConfig& c) { c.use_rec = true; }));
  configs.push_back(only("cta", [](losses::LossConfig& c) { c.use_cta = true; }));
  configs.push_back(only("ctv", [](losses::LossConfig& c) { c.use_ctv = true; }));
  configs.push_back(only("ta", [](losses::LossConfig& c) { c.use_ta = true; }));
  configs.push_back(only("at", [](losses::LossConfig& c) { c.use_at = true; }));
  configs.push_back(only("tv", [](losses::LossConfig& c) { c.use_tv = true; }));
  configs.push_back(only("vt", [](losses::LossConfig& c) { c.use_vt = true; }));
  losses::LossConfig all;
  all.margin = margin;
  configs.emplace_back("all", all);
  return configs;
}

model::ArchitectureSpec arch_for_dataset(const data::Dataset& dataset) {
  model::ArchitectureSpec arch;
  const std::vector<data::FeatureRecord>* any = nullptr;
  for (const auto* split :
       {&dataset.splits.train, &dataset.splits.val, &dataset.splits.test}) {
    if (!split->empty()) {
      any = split;
      break;
    }
  }
  if (any == nullptr) throw data::DataError(data::DataError::Kind::InvalidArgument, "empty dataset");
  arch.dim_audio_in = static_cast<std::uint32_t>(any->front().audio.size());
  arch.dim_video_in = static_cast<std::uint32_t>(any->front().video.size());
  arch.dim_text_in = dataset.manifest.text_dim;
  return arch;
}

std::vector<AblationRow> ablate(const data::Dataset& dataset,
                                const model::ArchitectureSpec& arch,
                                const train::TrainConfig& base_config,
                                eval::ModalityCondition condition) {
  struct RowSpec {
    std::string label;
    void (*drop)(losses::LossConfig&);
  };
  const RowSpec rows[] = {
      {"full", [](losses::LossConfig&) {}},
      {"-rec", [](losses::LossConfig& c) { c.use_rec = false; }},
      {"-cta", [](losses::LossConfig& c) { c.use_cta = false; }},
      {"-ctv", [](losses::LossConfig& c) { c.use_ctv = false; }},
      {"-ta", [](losses::LossConfig& c) { c.use_ta = false; }},
      {"-at", [](losses::LossConfig& c) { c.use_at = false; }},
      {"-tv", [](losses::LossConfig& c) { c.use_tv = false; }},
      {"-vt", [](losses::LossConfig& c) { c.use_vt = false; }},
  };

  std::vector<AblationRow> table;
  for (const RowSpec& row : rows) {
    train::TrainConfig config = base_config;
    config.checkpoint_stem.clear();
    row.drop(config.loss);
    const train::TrainResult result = train::train(dataset, arch, config);
    const eval::EvalReport report = eval::gzsl_classification_eval(
        result.params, dataset.manifest, dataset.splits.test, condition);
    table.push_back({row.label, report.seen_mean, report.unseen_mean, report.hm});
  }
  return table;
}

std::string render_ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%-6s %8s %8s %8s", "row", "S", "U", "HM");
  os << buf << '\n';
  for (const AblationRow& row : rows) {
    std::snprintf(buf, sizeof(buf), "%-6s %8.2f %8.2f %8.2f", row.label.c_str(),
                  row.seen_mean, row.unseen_mean, row.hm);
    os << buf << '\n';
  }
  return os.str();
}

}  // namespace avgzsl::pipeline
