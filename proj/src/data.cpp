#include "avgzsl/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace avgzsl::data {

namespace {

constexpr char kRecordsMagic[4] = {'A', 'V', 'Z', 'F'};
constexpr std::uint32_t kRecordsVersion = 1;

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& is, const std::string& path) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw DataError(DataError::Kind::Truncated, "truncated records file " + path);
  return v;
}

void check_finite(const Vec& v, const char* modality, std::size_t record_index) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw DataError(DataError::Kind::NonFinite,
                      "non-finite " + std::string(modality) + " value in record " +
                          std::to_string(record_index) + " at coordinate " +
                          std::to_string(i));
    }
  }
}

}  // namespace

const ClassInfo& ClassManifest::class_info(std::uint32_t id) const {
  if (id >= classes.size()) {
    throw DataError(DataError::Kind::UnknownClass,
                    "unknown class id " + std::to_string(id) + " (have " +
                        std::to_string(classes.size()) + " classes)");
  }
  return classes[id];
}

std::size_t ClassManifest::seen_count() const {
  return static_cast<std::size_t>(
      std::count_if(classes.begin(), classes.end(), [](const ClassInfo& c) { return c.seen; }));
}

std::size_t ClassManifest::unseen_count() const { return classes.size() - seen_count(); }

void ClassManifest::validate() const {
  if (classes.empty()) throw DataError(DataError::Kind::InvalidArgument, "empty manifest");
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i].id != i) {
      throw DataError(DataError::Kind::InvalidArgument,
                      "class ids must be contiguous from 0; slot " + std::to_string(i) +
                          " has id " + std::to_string(classes[i].id));
    }
    if (classes[i].text.size() != text_dim) {
      throw DataError(DataError::Kind::DimMismatch,
                      "class " + std::to_string(i) + " text dim " +
                          std::to_string(classes[i].text.size()) + " != manifest dim " +
                          std::to_string(text_dim));
    }
    check_finite(classes[i].text, "text", i);
  }
}

void save_manifest(const ClassManifest& manifest, const std::string& path) {
  manifest.validate();
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw DataError(DataError::Kind::Io, "cannot open " + tmp);
    os << "AVZM 1 " << manifest.classes.size() << ' ' << manifest.text_dim << '\n';
    for (const ClassInfo& c : manifest.classes) {
      os << c.id << '\t' << c.name << '\t' << (c.seen ? 'S' : 'U') << '\t';
      for (std::size_t i = 0; i < c.text.size(); ++i) {
        if (i) os << ' ';
        os << format_real(c.text[i]);
      }
      os << '\n';
    }
    if (!os) throw DataError(DataError::Kind::Io, "write failed on " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

ClassManifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError(DataError::Kind::Io, "cannot open " + path);
  std::string magic;
  std::uint32_t version = 0, n_classes = 0, dim_text = 0;
  std::string header;
  if (!std::getline(is, header)) {
    throw DataError(DataError::Kind::Truncated, "empty manifest " + path);
  }
  std::istringstream hs(header);
  if (!(hs >> magic >> version >> n_classes >> dim_text)) {
    throw DataError(DataError::Kind::Parse, "unparsable manifest header in " + path);
  }
  if (magic != "AVZM") throw DataError(DataError::Kind::BadMagic, "bad manifest magic in " + path);
  if (version != 1) {
    throw DataError(DataError::Kind::VersionMismatch,
                    "unsupported manifest version " + std::to_string(version));
  }
  ClassManifest manifest;
  manifest.text_dim = dim_text;
  manifest.classes.reserve(n_classes);
  std::string line;
  for (std::uint32_t i = 0; i < n_classes; ++i) {
    if (!std::getline(is, line)) {
      throw DataError(DataError::Kind::Truncated,
                      "manifest " + path + " truncated at class " + std::to_string(i));
    }
    std::istringstream ls(line);
    ClassInfo c;
    std::string flag, values;
    if (!std::getline(ls, values, '\t')) {
      throw DataError(DataError::Kind::Parse, "bad manifest line " + std::to_string(i));
    }
    c.id = static_cast<std::uint32_t>(std::stoul(values));
    if (!std::getline(ls, c.name, '\t') || !std::getline(ls, flag, '\t') ||
        !std::getline(ls, values)) {
      throw DataError(DataError::Kind::Parse, "bad manifest line " + std::to_string(i));
    }
    if (flag != "S" && flag != "U") {
      throw DataError(DataError::Kind::Parse,
                      "bad seen/unseen flag '" + flag + "' on class " + std::to_string(i));
    }
    c.seen = flag == "S";
    std::istringstream vs(values);
    double x = 0;
    while (vs >> x) c.text.push_back(x);
    manifest.classes.push_back(std::move(c));
  }
  manifest.validate();
  return manifest;
}

void save_records(const std::vector<FeatureRecord>& records, std::uint32_t dim_audio,
                  std::uint32_t dim_video, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError(DataError::Kind::Io, "cannot open " + tmp);
    os.write(kRecordsMagic, 4);
    write_u32(os, kRecordsVersion);
    write_u32(os, static_cast<std::uint32_t>(records.size()));
    write_u32(os, dim_audio);
    write_u32(os, dim_video);
    std::vector<float> buf;
    for (std::size_t r = 0; r < records.size(); ++r) {
      const FeatureRecord& rec = records[r];
      if (rec.audio.size() != dim_audio) {
        throw DataError(DataError::Kind::DimMismatch,
                        "record " + std::to_string(r) + " audio dim " +
                            std::to_string(rec.audio.size()) + " != " +
                            std::to_string(dim_audio));
      }
      if (rec.video.size() != dim_video) {
        throw DataError(DataError::Kind::DimMismatch,
                        "record " + std::to_string(r) + " video dim " +
                            std::to_string(rec.video.size()) + " != " +
                            std::to_string(dim_video));
      }
      write_u32(os, rec.class_id);
      buf.assign(rec.audio.begin(), rec.audio.end());
      os.write(reinterpret_cast<const char*>(buf.data()),
               static_cast<std::streamsize>(buf.size() * sizeof(float)));
      buf.assign(rec.video.begin(), rec.video.end());
      os.write(reinterpret_cast<const char*>(buf.data()),
               static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!os) throw DataError(DataError::Kind::Io, "write failed on " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::vector<FeatureRecord> load_records(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError(DataError::Kind::Io, "cannot open " + path);
  char magic[4] = {};
  is.read(magic, 4);
  if (!is) throw DataError(DataError::Kind::Truncated, "truncated records file " + path);
  if (std::memcmp(magic, kRecordsMagic, 4) != 0) {
    throw DataError(DataError::Kind::BadMagic, "bad records magic in " + path);
  }
  const std::uint32_t version = read_u32(is, path);
  if (version != kRecordsVersion) {
    throw DataError(DataError::Kind::VersionMismatch,
                    "unsupported records version " + std::to_string(version));
  }
  const std::uint32_t n_records = read_u32(is, path);
  const std::uint32_t dim_audio = read_u32(is, path);
  const std::uint32_t dim_video = read_u32(is, path);
  std::vector<FeatureRecord> records(n_records);
  std::vector<float> buf;
  for (std::uint32_t r = 0; r < n_records; ++r) {
    records[r].class_id = read_u32(is, path);
    buf.resize(dim_audio);
    is.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!is) throw DataError(DataError::Kind::Truncated, "truncated records file " + path);
    records[r].audio.assign(buf.begin(), buf.end());
    check_finite(records[r].audio, "audio", r);
    buf.resize(dim_video);
    is.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!is) throw DataError(DataError::Kind::Truncated, "truncated records file " + path);
    records[r].video.assign(buf.begin(), buf.end());
    check_finite(records[r].video, "video", r);
  }
  return records;
}

std::string manifest_path(const std::string& stem) { return stem + ".manifest.avzm"; }

std::string records_path(const std::string& stem, const std::string& split) {
  return stem + "." + split + ".avzf";
}

void save_dataset(const Dataset& dataset, const std::string& stem) {
  std::uint32_t da = 0, dv = 0;
  for (const auto* split : {&dataset.splits.train, &dataset.splits.val, &dataset.splits.test}) {
    if (!split->empty()) {
      da = static_cast<std::uint32_t>(split->front().audio.size());
      dv = static_cast<std::uint32_t>(split->front().video.size());
      break;
    }
  }
  save_manifest(dataset.manifest, manifest_path(stem));
  save_records(dataset.splits.train, da, dv, records_path(stem, "train"));
  save_records(dataset.splits.val, da, dv, records_path(stem, "val"));
  save_records(dataset.splits.test, da, dv, records_path(stem, "test"));
}

Dataset load_dataset(const std::string& stem) {
  Dataset ds;
  ds.manifest = load_manifest(manifest_path(stem));
  ds.splits.train = load_records(records_path(stem, "train"));
  ds.splits.val = load_records(records_path(stem, "val"));
  ds.splits.test = load_records(records_path(stem, "test"));

  std::size_t da = 0, dv = 0;
  bool dims_set = false;
  const char* names[] = {"train", "val", "test"};
  const std::vector<FeatureRecord>* splits[] = {&ds.splits.train, &ds.splits.val,
                                                &ds.splits.test};
  for (int s = 0; s < 3; ++s) {
    for (std::size_t r = 0; r < splits[s]->size(); ++r) {
      const FeatureRecord& rec = (*splits[s])[r];
      if (!dims_set) {
        da = rec.audio.size();
        dv = rec.video.size();
        dims_set = true;
      }
      if (rec.audio.size() != da || rec.video.size() != dv) {
        throw DataError(DataError::Kind::DimMismatch,
                        std::string("dim mismatch in ") + names[s] + " record " +
                            std::to_string(r));
      }
      if (rec.class_id >= ds.manifest.classes.size()) {
        throw DataError(DataError::Kind::UnknownClass,
                        std::string("record ") + std::to_string(r) + " in " + names[s] +
                            " references unknown class id " + std::to_string(rec.class_id));
      }
      if (s == 0 && !ds.manifest.classes[rec.class_id].seen) {
        throw DataError(DataError::Kind::InvalidArgument,
                        "train record " + std::to_string(r) + " belongs to unseen class " +
                            std::to_string(rec.class_id));
      }
    }
  }
  return ds;
}

std::vector<losses::TuplePair> sample_pairs(const std::vector<FeatureRecord>& records,
                                            const ClassManifest& manifest,
                                            std::size_t batch_size, std::mt19937_64& rng) {
  if (batch_size < 1) throw DataError(DataError::Kind::InvalidArgument, "batch_size must be >= 1");
  // records grouped by class, with each class occupying one contiguous block
  std::vector<std::size_t> grouped;
  std::vector<std::size_t> block_start(manifest.classes.size() + 1, 0);
  std::vector<std::size_t> class_count(manifest.classes.size(), 0);
  for (const FeatureRecord& rec : records) {
    manifest.class_info(rec.class_id);
    ++class_count[rec.class_id];
  }
  std::size_t distinct = 0;
  for (std::size_t c = 0; c < manifest.classes.size(); ++c) {
    block_start[c + 1] = block_start[c] + class_count[c];
    if (class_count[c] > 0) ++distinct;
  }
  if (distinct < 2) {
    throw DataError(DataError::Kind::InvalidArgument,
                    "sample_pairs requires records from at least 2 distinct classes");
  }
  grouped.resize(records.size());
  std::vector<std::size_t> cursor(block_start.begin(), block_start.end() - 1);
  for (std::size_t i = 0; i < records.size(); ++i) grouped[cursor[records[i].class_id]++] = i;

  std::uniform_int_distribution<std::size_t> pick_p(0, records.size() - 1);
  std::vector<losses::TuplePair> batch;
  batch.reserve(batch_size);
  for (std::size_t b = 0; b < batch_size; ++b) {
    const std::size_t p_idx = pick_p(rng);
    const std::uint32_t p_class = records[p_idx].class_id;
    const std::size_t others = records.size() - class_count[p_class];
    std::uniform_int_distribution<std::size_t> pick_q(0, others - 1);
    std::size_t r = pick_q(rng);
    if (r >= block_start[p_class]) r += class_count[p_class];
    const std::size_t q_idx = grouped[r];

    losses::TuplePair pair;
    pair.p.class_id = p_class;
    pair.p.audio = records[p_idx].audio;
    pair.p.video = records[p_idx].video;
    pair.p.text = manifest.class_info(p_class).text;
    pair.q.class_id = records[q_idx].class_id;
    pair.q.audio = records[q_idx].audio;
    pair.q.video = records[q_idx].video;
    pair.q.text = manifest.class_info(pair.q.class_id).text;
    batch.push_back(std::move(pair));
  }
  return batch;
}

Dataset gen_synthetic(const SyntheticSpec& spec) {
  if (spec.n_seen < 2 || spec.n_unseen < 1 || spec.per_class < 2) {
    throw DataError(DataError::Kind::InvalidArgument,
                    "gen_synthetic requires n_seen >= 2, n_unseen >= 1, per_class >= 2");
  }
  if (spec.noise_sigma < 0.0) {
    throw DataError(DataError::Kind::InvalidArgument, "noise_sigma must be >= 0");
  }
  const std::uint32_t n_classes = spec.n_seen + spec.n_unseen;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Dataset ds;
  ds.manifest.text_dim = spec.dim_text;
  ds.manifest.classes.resize(n_classes);
  std::vector<Vec> prototypes(n_classes);
  for (std::uint32_t c = 0; c < n_classes; ++c) {
    Vec proto(spec.dim_text);
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (double& x : proto) {
        x = normal(rng);
        norm2 += x * x;
      }
    } while (norm2 == 0.0);
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : proto) x *= inv;
    prototypes[c] = proto;

    ClassInfo& info = ds.manifest.classes[c];
    info.id = c;
    info.seen = c < spec.n_seen;
    info.name = (info.seen ? "seen_" : "unseen_") +
                std::to_string(info.seen ? c : c - spec.n_seen);
    info.text = std::move(proto);
  }

  // shared full-rank mixing maps text prototype space -> feature spaces
  tensor::DenseMatrix map_audio(spec.dim_audio, spec.dim_text);
  for (double& x : map_audio.data) x = normal(rng);
  tensor::DenseMatrix map_video(spec.dim_video, spec.dim_text);
  for (double& x : map_video.data) x = normal(rng);

  auto project = [](const tensor::DenseMatrix& m, const Vec& p) {
    Vec out(m.rows, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
      const double* row = m.data.data() + r * m.cols;
      double acc = 0.0;
      for (std::size_t c = 0; c < m.cols; ++c) acc += row[c] * p[c];
      out[r] = acc;
    }
    return out;
  };

  const std::uint32_t n_train = spec.per_class * 7 / 10;
  const std::uint32_t n_val = spec.per_class / 10;
  for (std::uint32_t c = 0; c < n_classes; ++c) {
    const Vec base_audio = project(map_audio, prototypes[c]);
    const Vec base_video = project(map_video, prototypes[c]);
    for (std::uint32_t i = 0; i < spec.per_class; ++i) {
      FeatureRecord rec;
      rec.class_id = c;
      rec.audio.resize(spec.dim_audio);
      for (std::size_t j = 0; j < spec.dim_audio; ++j) {
        // quantize through float so the on-disk format round-trips bit-exactly
        rec.audio[j] = static_cast<double>(
            static_cast<float>(base_audio[j] + spec.noise_sigma * normal(rng)));
      }
      rec.video.resize(spec.dim_video);
      for (std::size_t j = 0; j < spec.dim_video; ++j) {
        rec.video[j] = static_cast<double>(
            static_cast<float>(base_video[j] + spec.noise_sigma * normal(rng)));
      }
      if (c < spec.n_seen) {
        if (i < n_train) {
          ds.splits.train.push_back(std::move(rec));
        } else if (i < n_train + n_val) {
          ds.splits.val.push_back(std::move(rec));
        } else {
          ds.splits.test.push_back(std::move(rec));
        }
      } else {
        ds.splits.test.push_back(std::move(rec));
      }
    }
  }
  return ds;
}

}  // namespace avgzsl::data
