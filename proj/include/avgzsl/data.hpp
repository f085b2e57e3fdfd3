#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "avgzsl/losses.hpp"
#include "avgzsl/tensor.hpp"

namespace avgzsl::data {

using tensor::Vec;

/// One extracted data point: audio and video feature vectors plus label.
struct FeatureRecord {
  std::uint32_t class_id = 0;
  Vec audio;
  Vec video;

  bool operator==(const FeatureRecord&) const = default;
};

struct ClassInfo {
  std::uint32_t id = 0;
  std::string name;
  bool seen = true;
  Vec text;

  bool operator==(const ClassInfo&) const = default;
};

/// All classes (seen and unseen) with their label text features. Ids are
/// contiguous from 0 and index directly into `classes`.
struct ClassManifest {
  std::vector<ClassInfo> classes;
  std::uint32_t text_dim = 0;

  const ClassInfo& class_info(std::uint32_t id) const;
  std::size_t seen_count() const;
  std::size_t unseen_count() const;
  void validate() const;

  bool operator==(const ClassManifest&) const = default;
};

struct SplitSet {
  std::vector<FeatureRecord> train;
  std::vector<FeatureRecord> val;
  std::vector<FeatureRecord> test;

  bool operator==(const SplitSet&) const = default;
};

struct Dataset {
  ClassManifest manifest;
  SplitSet splits;

  bool operator==(const Dataset&) const = default;
};

struct DataError : std::runtime_error {
  enum class Kind {
    Io,
    BadMagic,
    VersionMismatch,
    Truncated,
    DimMismatch,
    UnknownClass,
    NonFinite,
    Parse,
    InvalidArgument
  };
  Kind kind;
  DataError(Kind k, const std::string& what) : std::runtime_error(what), kind(k) {}
};

// Manifest: UTF-8 text, header "AVZM 1 <n_classes> <Dt>", one tab-separated
// line per class.
void save_manifest(const ClassManifest& manifest, const std::string& path);
ClassManifest load_manifest(const std::string& path);

// Records: little-endian binary, magic "AVZF", version 1, features stored as
// 32-bit floats and widened to 64-bit on load.
void save_records(const std::vector<FeatureRecord>& records, std::uint32_t dim_audio,
                  std::uint32_t dim_video, const std::string& path);
std::vector<FeatureRecord> load_records(const std::string& path);

/// Writes <stem>.manifest.avzm plus <stem>.{train,val,test}.avzf.
void save_dataset(const Dataset& dataset, const std::string& stem);
/// Loads and cross-validates all four files.
Dataset load_dataset(const std::string& stem);

std::string manifest_path(const std::string& stem);
std::string records_path(const std::string& stem, const std::string& split);

/// Draws batch_size pairs with p uniform over records and q uniform over
/// records of any other class; text features are attached from the manifest.
std::vector<losses::TuplePair> sample_pairs(const std::vector<FeatureRecord>& records,
                                            const ClassManifest& manifest,
                                            std::size_t batch_size, std::mt19937_64& rng);

struct SyntheticSpec {
  std::uint32_t n_seen = 8;
  std::uint32_t n_unseen = 4;
  std::uint32_t per_class = 50;
  std::uint32_t dim_audio = 1024;
  std::uint32_t dim_video = 1024;
  std::uint32_t dim_text = 300;
  double noise_sigma = 0.1;
  std::uint64_t seed = 0;
};

/// Per-class text prototype on the unit sphere; audio/video features are
/// fixed full-rank linear images of the prototype plus gaussian noise, so
/// text genuinely predicts both modalities. Seen classes split 70/10/20
/// train/val/test, unseen classes test-only. Deterministic per seed.
Dataset gen_synthetic(const SyntheticSpec& spec);

}  // namespace avgzsl::data
