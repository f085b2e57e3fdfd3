#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "avgzsl/data.hpp"
#include "avgzsl/model.hpp"
#include "avgzsl/tensor.hpp"

namespace avgzsl::eval {

using data::ClassManifest;
using data::FeatureRecord;
using model::ModelParams;
using tensor::DenseMatrix;
using tensor::Vec;

enum class ModalityCondition { AudioOnly, VideoOnly, Both };

std::string to_string(ModalityCondition c);
ModalityCondition modality_from_string(const std::string& s);

/// Per-class metric values (percent) with seen/unseen means and their
/// harmonic mean.
struct EvalReport {
  ModalityCondition condition = ModalityCondition::Both;
  std::map<std::uint32_t, double> per_class;
  std::vector<std::uint32_t> skipped_classes;  // no test samples / no relevant items
  double seen_mean = 0.0;
  double unseen_mean = 0.0;
  double hm = 0.0;
};

/// 2*U*S/(U+S), 0 when U+S is 0.
double harmonic_mean(double s, double u);

/// Row i = embed_text of class i's text features, seen and unseen alike.
DenseMatrix class_text_embeddings(const ModelParams& params, const ClassManifest& manifest);

struct Classification {
  std::uint32_t predicted_class = 0;
  Vec distances;  // per class id
};

/// Nearest class text embedding under the per-condition distance; Both uses
/// the equal-weight mean of audio and video distances. Ties go to the lowest
/// class id.
Classification classify(const ModelParams& params, const ClassManifest& manifest,
                        const FeatureRecord& query, ModalityCondition condition);
Classification classify_precomputed(const ModelParams& params, const DenseMatrix& text_emb,
                                    const FeatureRecord& query, ModalityCondition condition);

EvalReport mean_class_accuracy(const std::vector<std::uint32_t>& predictions,
                               const std::vector<std::uint32_t>& ground_truth,
                               const ClassManifest& manifest, ModalityCondition condition);

/// Classifies every gallery record and folds into mean class accuracy.
EvalReport gzsl_classification_eval(const ModelParams& params, const ClassManifest& manifest,
                                    const std::vector<FeatureRecord>& gallery,
                                    ModalityCondition condition);

/// Gallery indices sorted ascending by distance to the query class's text
/// embedding; stable, ties by record index.
std::vector<std::size_t> retrieve(const ModelParams& params, const ClassManifest& manifest,
                                  const std::vector<FeatureRecord>& gallery,
                                  std::uint32_t query_class, ModalityCondition condition);

/// Mean over relevant ranks k of precision-at-k, times 100. Throws if no
/// item is relevant.
double average_precision(const std::vector<bool>& relevance);

EvalReport gzsl_retrieval_eval(const ModelParams& params, const ClassManifest& manifest,
                               const std::vector<FeatureRecord>& gallery,
                               ModalityCondition condition);

/// Lines "<a|v|t>\t<class_id>\t<record_index|-1>\t<values>".
void export_embeddings(const ModelParams& params, const std::vector<FeatureRecord>& records,
                       const ClassManifest& manifest, const std::string& path);

/// "class=<id> metric=<v>" lines, then "S=<v> U=<v> HM=<v>" (2 decimals).
std::string render_report(const EvalReport& report);
void write_report(const EvalReport& report, const std::string& path);

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace avgzsl::eval
