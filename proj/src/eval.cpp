#include "avgzsl/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "avgzsl/losses.hpp"

namespace avgzsl::eval {

namespace {

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_2dec(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

Vec text_embedding_row(const DenseMatrix& text_emb, std::uint32_t c) {
  return Vec(text_emb.data.begin() + static_cast<std::ptrdiff_t>(c * text_emb.cols),
             text_emb.data.begin() + static_cast<std::ptrdiff_t>((c + 1) * text_emb.cols));
}

/// Per-class distances of one record under the given condition.
Vec condition_distances(const ModelParams& params, const DenseMatrix& text_emb,
                        const FeatureRecord& query, ModalityCondition condition) {
  const bool need_audio = condition != ModalityCondition::VideoOnly;
  const bool need_video = condition != ModalityCondition::AudioOnly;
  if (need_audio && query.audio.empty()) {
    throw EvalError("query is missing the audio modality required by condition " +
                    to_string(condition));
  }
  if (need_video && query.video.empty()) {
    throw EvalError("query is missing the video modality required by condition " +
                    to_string(condition));
  }
  Vec a_emb, v_emb;
  if (need_audio) a_emb = model::embed_audio(params, query.audio);
  if (need_video) v_emb = model::embed_video(params, query.video);

  const std::size_t n_classes = text_emb.rows;
  Vec dist(n_classes, 0.0);
  for (std::uint32_t c = 0; c < n_classes; ++c) {
    const Vec t_c = text_embedding_row(text_emb, c);
    switch (condition) {
      case ModalityCondition::AudioOnly:
        dist[c] = losses::mse_distance(a_emb, t_c);
        break;
      case ModalityCondition::VideoOnly:
        dist[c] = losses::mse_distance(v_emb, t_c);
        break;
      case ModalityCondition::Both:
        dist[c] =
            (losses::mse_distance(a_emb, t_c) + losses::mse_distance(v_emb, t_c)) / 2.0;
        break;
    }
  }
  return dist;
}

}  // namespace

std::string to_string(ModalityCondition c) {
  switch (c) {
    case ModalityCondition::AudioOnly:
      return "audio";
    case ModalityCondition::VideoOnly:
      return "video";
    case ModalityCondition::Both:
      return "both";
  }
  return "?";
}

ModalityCondition modality_from_string(const std::string& s) {
  if (s == "audio") return ModalityCondition::AudioOnly;
  if (s == "video") return ModalityCondition::VideoOnly;
  if (s == "both") return ModalityCondition::Both;
  throw EvalError("unknown modality '" + s + "' (expected audio|video|both)");
}

double harmonic_mean(double s, double u) {
  return (s + u) > 0.0 ? 2.0 * u * s / (u + s) : 0.0;
}

DenseMatrix class_text_embeddings(const ModelParams& params, const ClassManifest& manifest) {
  const std::size_t n = manifest.classes.size();
  DenseMatrix out(n, params.arch.embed_dim);
  for (std::size_t c = 0; c < n; ++c) {
    const Vec e = model::embed_text(params, manifest.classes[c].text);
    std::copy(e.begin(), e.end(), out.data.begin() + static_cast<std::ptrdiff_t>(c * out.cols));
  }
  return out;
}

Classification classify_precomputed(const ModelParams& params, const DenseMatrix& text_emb,
                                    const FeatureRecord& query, ModalityCondition condition) {
  Classification result;
  result.distances = condition_distances(params, text_emb, query, condition);
  std::uint32_t best = 0;
  for (std::uint32_t c = 1; c < result.distances.size(); ++c) {
    if (result.distances[c] < result.distances[best]) best = c;
  }
  result.predicted_class = best;
  return result;
}

Classification classify(const ModelParams& params, const ClassManifest& manifest,
                        const FeatureRecord& query, ModalityCondition condition) {
  return classify_precomputed(params, class_text_embeddings(params, manifest), query,
                              condition);
}

namespace {

void fold_means(EvalReport& report, const ClassManifest& manifest) {
  double s_sum = 0.0, u_sum = 0.0;
  std::size_t s_n = 0, u_n = 0;
  for (const auto& [cid, value] : report.per_class) {
    if (manifest.class_info(cid).seen) {
      s_sum += value;
      ++s_n;
    } else {
      u_sum += value;
      ++u_n;
    }
  }
  report.seen_mean = s_n > 0 ? s_sum / static_cast<double>(s_n) : 0.0;
  report.unseen_mean = u_n > 0 ? u_sum / static_cast<double>(u_n) : 0.0;
  report.hm = harmonic_mean(report.seen_mean, report.unseen_mean);
}

}  // namespace

EvalReport mean_class_accuracy(const std::vector<std::uint32_t>& predictions,
                               const std::vector<std::uint32_t>& ground_truth,
                               const ClassManifest& manifest, ModalityCondition condition) {
  if (predictions.size() != ground_truth.size()) {
    throw EvalError("predictions/ground truth length mismatch");
  }
  if (predictions.empty()) throw EvalError("mean_class_accuracy: empty evaluation set");
  std::map<std::uint32_t, std::pair<std::size_t, std::size_t>> tallies;  // correct, total
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    auto& [correct, total] = tallies[ground_truth[i]];
    ++total;
    if (predictions[i] == ground_truth[i]) ++correct;
  }
  EvalReport report;
  report.condition = condition;
  for (const auto& [cid, tally] : tallies) {
    report.per_class[cid] =
        100.0 * static_cast<double>(tally.first) / static_cast<double>(tally.second);
  }
  for (const data::ClassInfo& c : manifest.classes) {
    if (!tallies.contains(c.id)) report.skipped_classes.push_back(c.id);
  }
  fold_means(report, manifest);
  return report;
}

EvalReport gzsl_classification_eval(const ModelParams& params, const ClassManifest& manifest,
                                    const std::vector<FeatureRecord>& gallery,
                                    ModalityCondition condition) {
  const DenseMatrix text_emb = class_text_embeddings(params, manifest);
  std::vector<std::uint32_t> predictions, truth;
  predictions.reserve(gallery.size());
  truth.reserve(gallery.size());
  for (const FeatureRecord& rec : gallery) {
    predictions.push_back(classify_precomputed(params, text_emb, rec, condition).predicted_class);
    truth.push_back(rec.class_id);
  }
  return mean_class_accuracy(predictions, truth, manifest, condition);
}

std::vector<std::size_t> retrieve(const ModelParams& params, const ClassManifest& manifest,
                                  const std::vector<FeatureRecord>& gallery,
                                  std::uint32_t query_class, ModalityCondition condition) {
  if (gallery.empty()) throw EvalError("retrieve: empty gallery");
  manifest.class_info(query_class);
  const DenseMatrix text_emb = class_text_embeddings(params, manifest);
  Vec dist(gallery.size());
  for (std::size_t i = 0; i < gallery.size(); ++i) {
    dist[i] = condition_distances(params, text_emb, gallery[i], condition)[query_class];
  }
  std::vector<std::size_t> order(gallery.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&dist](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  return order;
}

double average_precision(const std::vector<bool>& relevance) {
  std::size_t relevant_seen = 0;
  double acc = 0.0;
  for (std::size_t k = 0; k < relevance.size(); ++k) {
    if (relevance[k]) {
      ++relevant_seen;
      acc += static_cast<double>(relevant_seen) / static_cast<double>(k + 1);
    }
  }
  if (relevant_seen == 0) throw EvalError("average_precision: no relevant items");
  return 100.0 * acc / static_cast<double>(relevant_seen);
}

EvalReport gzsl_retrieval_eval(const ModelParams& params, const ClassManifest& manifest,
                               const std::vector<FeatureRecord>& gallery,
                               ModalityCondition condition) {
  EvalReport report;
  report.condition = condition;
  for (const data::ClassInfo& c : manifest.classes) {
    const bool any_relevant = std::any_of(gallery.begin(), gallery.end(),
                                          [&c](const FeatureRecord& r) { return r.class_id == c.id; });
    if (!any_relevant) {
      report.skipped_classes.push_back(c.id);
      continue;
    }
    const std::vector<std::size_t> order = retrieve(params, manifest, gallery, c.id, condition);
    std::vector<bool> relevance(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
      relevance[k] = gallery[order[k]].class_id == c.id;
    }
    report.per_class[c.id] = average_precision(relevance);
  }
  if (report.per_class.empty()) throw EvalError("gzsl_retrieval_eval: empty gallery");
  fold_means(report, manifest);
  return report;
}

void export_embeddings(const ModelParams& params, const std::vector<FeatureRecord>& records,
                       const ClassManifest& manifest, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw EvalError("cannot open " + tmp);
    auto write_row = [&os](char kind, std::uint32_t cid, std::ptrdiff_t rec_idx, const Vec& e) {
      os << kind << '\t' << cid << '\t' << rec_idx << '\t';
      for (std::size_t i = 0; i < e.size(); ++i) {
        if (i) os << ' ';
        os << format_real(e[i]);
      }
      os << '\n';
    };
    for (std::size_t i = 0; i < records.size(); ++i) {
      write_row('a', records[i].class_id, static_cast<std::ptrdiff_t>(i),
                model::embed_audio(params, records[i].audio));
      write_row('v', records[i].class_id, static_cast<std::ptrdiff_t>(i),
                model::embed_video(params, records[i].video));
    }
    for (const data::ClassInfo& c : manifest.classes) {
      write_row('t', c.id, -1, model::embed_text(params, c.text));
    }
    if (!os) throw EvalError("write failed on " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::string render_report(const EvalReport& report) {
  std::ostringstream os;
  for (const auto& [cid, value] : report.per_class) {
    os << "class=" << cid << " metric=" << format_real(value) << '\n';
  }
  for (std::uint32_t cid : report.skipped_classes) {
    os << "class=" << cid << " metric=skipped\n";
  }
  os << "S=" << format_2dec(report.seen_mean) << " U=" << format_2dec(report.unseen_mean)
     << " HM=" << format_2dec(report.hm) << '\n';
  return os.str();
}

void write_report(const EvalReport& report, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw EvalError("cannot open " + tmp);
    os << render_report(report);
    if (!os) throw EvalError("write failed on " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace avgzsl::eval
