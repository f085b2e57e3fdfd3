#include <cstdio>
#include <fstream>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "avgzsl/data.hpp"
#include "avgzsl/eval.hpp"
#include "avgzsl/model.hpp"
#include "avgzsl/pipeline.hpp"
#include "avgzsl/trainer.hpp"

namespace {

using namespace avgzsl;

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };

LogLevel log_level() {
  const char* env = std::getenv("AVGZSL_LOG");
  if (env == nullptr) return LogLevel::Info;
  const std::string v = env;
  if (v == "quiet") return LogLevel::Quiet;
  if (v == "debug") return LogLevel::Debug;
  return LogLevel::Info;
}

void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::Info) std::cerr << msg << '\n';
}

std::string strip(const std::string& s) {
  const std::size_t begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  return s.substr(begin, s.find_last_not_of(" \t\r") - begin + 1);
}

// Flat key=value config file. Applied after command-line parsing, and only to
// options the user did not pass explicitly, so flags > config file > defaults.
void apply_config_file(CLI::App* cmd, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read config file " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string entry = strip(line);
    if (entry.empty() || entry[0] == '#') continue;
    const std::size_t eq = entry.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string key = strip(entry.substr(0, eq));
    const std::string value = strip(entry.substr(eq + 1));
    CLI::Option* op = cmd->get_option_no_throw("--" + key);
    if (op == nullptr)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (op->count() > 0) continue;  // command-line value wins
    op->add_result(value);
    op->run_callback();
  }
}

struct TrainFlags {
  std::uint32_t epochs = 30;
  std::uint32_t batch_size = 8;
  double lr = 1e-3;
  std::string optimizer = "adaptive-moment";
  double margin = 1.0;
  std::uint64_t seed = 0;
  std::vector<std::string> drops;

  void attach(CLI::App* cmd) {
    cmd->add_option("--epochs", epochs, "Training epochs");
    cmd->add_option("--batch-size", batch_size, "Pairs per batch");
    cmd->add_option("--lr", lr, "Learning rate");
    cmd->add_option("--optimizer", optimizer,
                    "plain-sgd | momentum-sgd | adaptive-moment");
    cmd->add_option("--margin", margin, "Triplet margin");
    cmd->add_option("--seed", seed, "Random seed");
    cmd->add_option("--drop", drops, "Drop a loss term: rec|cta|ctv|ta|at|tv|vt")
        ->allow_extra_args(false);
  }

  train::TrainConfig to_config() const {
    train::TrainConfig config;
    config.epochs = epochs;
    config.batch_size = batch_size;
    config.learning_rate = lr;
    config.optimizer = train::optimizer_from_string(optimizer);
    config.seed = seed;
    config.loss.margin = margin;
    for (const std::string& d : drops) {
      if (d == "rec") config.loss.use_rec = false;
      else if (d == "cta") config.loss.use_cta = false;
      else if (d == "ctv") config.loss.use_ctv = false;
      else if (d == "ta") config.loss.use_ta = false;
      else if (d == "at") config.loss.use_at = false;
      else if (d == "tv") config.loss.use_tv = false;
      else if (d == "vt") config.loss.use_vt = false;
      else throw CLI::ValidationError("--drop", "unknown loss term '" + d + "'");
    }
    return config;
  }
};

const std::vector<data::FeatureRecord>& pick_split(const data::Dataset& ds,
                                                   const std::string& split) {
  if (split == "train") return ds.splits.train;
  if (split == "val") return ds.splits.val;
  if (split == "test") return ds.splits.test;
  throw data::DataError(data::DataError::Kind::InvalidArgument,
                        "unknown split '" + split + "' (expected train|val|test)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio-visual generalized zero-shot learning laboratory"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic multi-modal dataset");
  data::SyntheticSpec gen_spec;
  std::string gen_out = "toy";
  gen->add_option("--seen", gen_spec.n_seen, "Number of seen classes");
  gen->add_option("--unseen", gen_spec.n_unseen, "Number of unseen classes");
  gen->add_option("--per-class", gen_spec.per_class, "Records per class");
  gen->add_option("--dim-audio", gen_spec.dim_audio, "Audio feature dim");
  gen->add_option("--dim-video", gen_spec.dim_video, "Video feature dim");
  gen->add_option("--dim-text", gen_spec.dim_text, "Text feature dim");
  gen->add_option("--sigma", gen_spec.noise_sigma, "Feature noise sigma");
  gen->add_option("--seed", gen_spec.seed, "Random seed");
  gen->add_option("--out", gen_out, "Output stem");

  // train
  auto* tr = app.add_subcommand("train", "Train projection networks and decoder");
  std::string tr_data, tr_out = "model.avzc", tr_log;
  TrainFlags tr_flags;
  tr->add_option("--data", tr_data, "Dataset stem")->required();
  tr->add_option("--out", tr_out, "Checkpoint output path");
  tr->add_option("--log", tr_log, "Training log path (default <out>.log)");
  tr_flags.attach(tr);

  // eval-cls / eval-ret
  auto* ec = app.add_subcommand("eval-cls", "Generalized zero-shot classification");
  auto* er = app.add_subcommand("eval-ret", "Generalized zero-shot retrieval");
  std::string ev_ckpt, ev_data, ev_modality = "both", ev_split = "test", ev_out;
  for (CLI::App* cmd : {ec, er}) {
    cmd->add_option("--ckpt", ev_ckpt, "Checkpoint path")->required();
    cmd->add_option("--data", ev_data, "Dataset stem")->required();
    cmd->add_option("--modality", ev_modality, "audio | video | both");
    cmd->add_option("--split", ev_split, "Gallery split: train|val|test");
    cmd->add_option("--out", ev_out, "Optional report output path");
  }

  // grad-check
  auto* gc = app.add_subcommand("grad-check", "Analytic vs finite-difference gradients");
  std::uint64_t gc_seed = 15;
  double gc_margin = 0.02;
  gc->add_option("--seed", gc_seed, "Random seed");
  gc->add_option("--margin", gc_margin, "Triplet margin");

  // export-emb
  auto* ex = app.add_subcommand("export-emb", "Export embeddings as text");
  std::string ex_ckpt, ex_data, ex_split = "test", ex_out = "embeddings.tsv";
  ex->add_option("--ckpt", ex_ckpt, "Checkpoint path")->required();
  ex->add_option("--data", ex_data, "Dataset stem")->required();
  ex->add_option("--split", ex_split, "Records split: train|val|test");
  ex->add_option("--out", ex_out, "Output path");

  // ablate
  auto* ab = app.add_subcommand("ablate", "Loss-term ablation grid");
  std::string ab_data, ab_modality = "both", ab_out;
  TrainFlags ab_flags;
  ab->add_option("--data", ab_data, "Dataset stem")->required();
  ab->add_option("--modality", ab_modality, "audio | video | both");
  ab->add_option("--out", ab_out, "Optional table output path");
  ab_flags.attach(ab);

  std::string config_path;
  for (CLI::App* cmd : app.get_subcommands(nullptr)) {
    cmd->add_option("--config", config_path,
                    "Flat key=value config file; explicit flags take precedence");
  }

  CLI11_PARSE(app, argc, argv);

  try {
    if (!config_path.empty()) {
      for (CLI::App* cmd : app.get_subcommands()) apply_config_file(cmd, config_path);
    }
    if (gen->parsed()) {
      const data::Dataset ds = data::gen_synthetic(gen_spec);
      data::save_dataset(ds, gen_out);
      log_info("wrote " + data::manifest_path(gen_out) + " and 3 split files (" +
               std::to_string(ds.splits.train.size()) + " train / " +
               std::to_string(ds.splits.val.size()) + " val / " +
               std::to_string(ds.splits.test.size()) + " test records)");
    } else if (tr->parsed()) {
      const data::Dataset ds = data::load_dataset(tr_data);
      const model::ArchitectureSpec arch = pipeline::arch_for_dataset(ds);
      const train::TrainConfig config = tr_flags.to_config();
      const train::TrainResult result = train::train(ds, arch, config);
      model::save_checkpoint(result.params, tr_out);
      train::save_log(result.log, tr_log.empty() ? tr_out + ".log" : tr_log);
      if (log_level() >= LogLevel::Debug) std::cerr << result.log.serialize();
      log_info("wrote " + tr_out + " after " +
               std::to_string(result.log.steps.size()) + " steps; final total=" +
               std::to_string(result.log.steps.back().report.total));
    } else if (ec->parsed() || er->parsed()) {
      const model::ModelParams params = model::load_checkpoint(ev_ckpt);
      const data::Dataset ds = data::load_dataset(ev_data);
      const eval::ModalityCondition condition = eval::modality_from_string(ev_modality);
      const auto& gallery = pick_split(ds, ev_split);
      const eval::EvalReport report =
          ec->parsed() ? eval::gzsl_classification_eval(params, ds.manifest, gallery, condition)
                       : eval::gzsl_retrieval_eval(params, ds.manifest, gallery, condition);
      if (!ev_out.empty()) eval::write_report(report, ev_out);
      // summary line is the last line of the rendered report
      const std::string rendered = eval::render_report(report);
      const std::size_t pos = rendered.rfind("S=");
      std::cout << rendered.substr(pos);
    } else if (gc->parsed()) {
      double max_err = 0.0;
      for (const auto& [name, config] : pipeline::gradient_check_configs(gc_margin)) {
        const double err = pipeline::gradient_check(config, gc_seed);
        log_info("grad-check " + name + ": max_rel_err=" + std::to_string(err));
        max_err = std::max(max_err, err);
      }
      std::printf("max_rel_err=%.3e\n", max_err);
      return max_err < 1e-4 ? EXIT_SUCCESS : EXIT_FAILURE;
    } else if (ex->parsed()) {
      const model::ModelParams params = model::load_checkpoint(ex_ckpt);
      const data::Dataset ds = data::load_dataset(ex_data);
      eval::export_embeddings(params, pick_split(ds, ex_split), ds.manifest, ex_out);
      log_info("wrote " + ex_out);
    } else if (ab->parsed()) {
      const data::Dataset ds = data::load_dataset(ab_data);
      const model::ArchitectureSpec arch = pipeline::arch_for_dataset(ds);
      const std::vector<pipeline::AblationRow> rows = pipeline::ablate(
          ds, arch, ab_flags.to_config(), eval::modality_from_string(ab_modality));
      const std::string table = pipeline::render_ablation_table(rows);
      if (!ab_out.empty()) {
        const std::string tmp = ab_out + ".tmp";
        std::FILE* f = std::fopen(tmp.c_str(), "w");
        if (f == nullptr) throw std::runtime_error("cannot open " + tmp);
        std::fputs(table.c_str(), f);
        std::fclose(f);
        std::rename(tmp.c_str(), ab_out.c_str());
      }
      std::cout << table;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return EXIT_FAILURE;
  }
  return EXIT_SUCCESS;
}
