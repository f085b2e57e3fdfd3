#include "avgzsl/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

namespace avgzsl::model {

namespace {

constexpr char kMagic[4] = {'A', 'V', 'Z', 'C'};
constexpr std::uint32_t kVersion = 1;

Vec two_layer_forward(const LayerParams& l1, const LayerParams& l2, const Vec& x) {
  return tensor::affine_forward(l2, tensor::relu_forward(tensor::affine_forward(l1, x)));
}

}  // namespace

void ArchitectureSpec::validate() const {
  const std::uint32_t dims[] = {dim_audio_in, dim_video_in, dim_text_in, embed_dim,
                                hidden_audio, hidden_video, hidden_decoder};
  for (std::uint32_t d : dims) {
    if (d < 1) throw std::invalid_argument("ArchitectureSpec: all dims must be >= 1");
  }
}

ModelParams make_params(const ArchitectureSpec& arch) {
  arch.validate();
  ModelParams p;
  p.arch = arch;
  p.f_a1 = LayerParams(arch.hidden_audio, arch.dim_audio_in);
  p.f_a2 = LayerParams(arch.embed_dim, arch.hidden_audio);
  p.f_v1 = LayerParams(arch.hidden_video, arch.dim_video_in);
  p.f_v2 = LayerParams(arch.embed_dim, arch.hidden_video);
  p.f_t = LayerParams(arch.embed_dim, arch.dim_text_in);
  p.f_dec1 = LayerParams(arch.hidden_decoder, arch.embed_dim);
  p.f_dec2 = LayerParams(arch.decoder_out_dim(), arch.hidden_decoder);
  return p;
}

ModelParams init_params(const ArchitectureSpec& arch, std::uint64_t seed) {
  ModelParams p = make_params(arch);
  std::mt19937_64 rng(seed);
  for (LayerParams* layer : p.layers()) {
    const double limit =
        std::sqrt(6.0 / static_cast<double>(layer->in_dim() + layer->out_dim()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& w : layer->weight.data) w = dist(rng);
    // biases stay zero
  }
  return p;
}

Vec embed_audio(const ModelParams& params, const Vec& x_a) {
  return two_layer_forward(params.f_a1, params.f_a2, x_a);
}

Vec embed_video(const ModelParams& params, const Vec& x_v) {
  return two_layer_forward(params.f_v1, params.f_v2, x_v);
}

Vec embed_text(const ModelParams& params, const Vec& x_t) {
  return tensor::affine_forward(params.f_t, x_t);
}

Vec decode(const ModelParams& params, const Vec& e) {
  return two_layer_forward(params.f_dec1, params.f_dec2, e);
}

TapedModel::TapedModel(Tape& tape, const ModelParams& params)
    : tape_(&tape), params_(&params) {
  const auto layers = params.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    w_[i] = tape.leaf_matrix(layers[i]->weight);
    b_[i] = tape.leaf(layers[i]->bias);
  }
}

VarId TapedModel::embed_audio(VarId x_a) {
  VarId h = tape_->affine(w_[0], b_[0], x_a, params_->f_a1.out_dim(), params_->f_a1.in_dim());
  h = tape_->relu(h);
  return tape_->affine(w_[1], b_[1], h, params_->f_a2.out_dim(), params_->f_a2.in_dim());
}

VarId TapedModel::embed_video(VarId x_v) {
  VarId h = tape_->affine(w_[2], b_[2], x_v, params_->f_v1.out_dim(), params_->f_v1.in_dim());
  h = tape_->relu(h);
  return tape_->affine(w_[3], b_[3], h, params_->f_v2.out_dim(), params_->f_v2.in_dim());
}

VarId TapedModel::embed_text(VarId x_t) {
  return tape_->affine(w_[4], b_[4], x_t, params_->f_t.out_dim(), params_->f_t.in_dim());
}

VarId TapedModel::decode(VarId e) {
  VarId h = tape_->affine(w_[5], b_[5], e, params_->f_dec1.out_dim(), params_->f_dec1.in_dim());
  h = tape_->relu(h);
  return tape_->affine(w_[6], b_[6], h, params_->f_dec2.out_dim(), params_->f_dec2.in_dim());
}

Vec TapedModel::collect_gradients() const {
  Vec out;
  out.reserve(param_count(params_->arch));
  for (std::size_t i = 0; i < w_.size(); ++i) {
    const Vec& gw = tape_->grad(w_[i]);
    const Vec& gb = tape_->grad(b_[i]);
    out.insert(out.end(), gw.begin(), gw.end());
    out.insert(out.end(), gb.begin(), gb.end());
  }
  return out;
}

std::size_t param_count(const ArchitectureSpec& arch) {
  std::size_t n = 0;
  for (const LayerParams* l : make_params(arch).layers()) {
    n += l->weight.data.size() + l->bias.size();
  }
  return n;
}

Vec flatten(const ModelParams& params) {
  Vec out;
  out.reserve(param_count(params.arch));
  for (const LayerParams* l : params.layers()) {
    out.insert(out.end(), l->weight.data.begin(), l->weight.data.end());
    out.insert(out.end(), l->bias.begin(), l->bias.end());
  }
  return out;
}

ModelParams unflatten(const ArchitectureSpec& arch, const Vec& flat) {
  ModelParams p = make_params(arch);
  std::size_t off = 0;
  for (LayerParams* l : p.layers()) {
    if (off + l->weight.data.size() + l->bias.size() > flat.size()) {
      throw std::invalid_argument("unflatten: parameter vector too short");
    }
    std::copy(flat.begin() + off, flat.begin() + off + l->weight.data.size(),
              l->weight.data.begin());
    off += l->weight.data.size();
    std::copy(flat.begin() + off, flat.begin() + off + l->bias.size(), l->bias.begin());
    off += l->bias.size();
  }
  if (off != flat.size()) throw std::invalid_argument("unflatten: parameter vector too long");
  return p;
}

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_doubles(std::ostream& os, const Vec& v) {
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw CheckpointError(CheckpointError::Kind::Truncated, "checkpoint truncated");
  return v;
}

void read_doubles(std::istream& is, Vec& v) {
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!is) throw CheckpointError(CheckpointError::Kind::Truncated, "checkpoint truncated");
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError(CheckpointError::Kind::Io, "cannot open " + tmp);
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    const ArchitectureSpec& a = params.arch;
    // decoder_out_dim is derived from dim_text_in, so seven dims suffice
    write_u32(os, a.dim_audio_in);
    write_u32(os, a.dim_video_in);
    write_u32(os, a.dim_text_in);
    write_u32(os, a.embed_dim);
    write_u32(os, a.hidden_audio);
    write_u32(os, a.hidden_video);
    write_u32(os, a.hidden_decoder);
    for (const LayerParams* l : params.layers()) {
      write_doubles(os, l->weight.data);
      write_doubles(os, l->bias);
    }
    if (!os) throw CheckpointError(CheckpointError::Kind::Io, "write failed on " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError(CheckpointError::Kind::Io, "cannot open " + path);
  char magic[4] = {};
  is.read(magic, 4);
  if (!is) throw CheckpointError(CheckpointError::Kind::Truncated, "checkpoint truncated");
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw CheckpointError(CheckpointError::Kind::BadMagic, "bad checkpoint magic in " + path);
  }
  const std::uint32_t version = read_u32(is);
  if (version != kVersion) {
    throw CheckpointError(CheckpointError::Kind::VersionMismatch,
                          "unsupported checkpoint version " + std::to_string(version));
  }
  ArchitectureSpec a;
  a.dim_audio_in = read_u32(is);
  a.dim_video_in = read_u32(is);
  a.dim_text_in = read_u32(is);
  a.embed_dim = read_u32(is);
  a.hidden_audio = read_u32(is);
  a.hidden_video = read_u32(is);
  a.hidden_decoder = read_u32(is);
  try {
    a.validate();
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(CheckpointError::Kind::ShapeMismatch, e.what());
  }
  ModelParams p = make_params(a);
  for (LayerParams* l : p.layers()) {
    read_doubles(is, l->weight.data);
    read_doubles(is, l->bias);
  }
  // trailing bytes indicate a shape/format inconsistency
  is.peek();
  if (!is.eof()) {
    throw CheckpointError(CheckpointError::Kind::ShapeMismatch,
                          "checkpoint has trailing data: " + path);
  }
  return p;
}

}  // namespace avgzsl::model
