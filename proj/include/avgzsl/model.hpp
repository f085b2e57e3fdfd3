#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "avgzsl/tensor.hpp"

namespace avgzsl::model {

using tensor::LayerParams;
using tensor::Tape;
using tensor::VarId;
using tensor::Vec;

/// Network shapes. The decoder reconstructs text features, so its output
/// dimension always equals dim_text_in.
struct ArchitectureSpec {
  std::uint32_t dim_audio_in = 1024;
  std::uint32_t dim_video_in = 1024;
  std::uint32_t dim_text_in = 300;
  std::uint32_t embed_dim = 64;
  std::uint32_t hidden_audio = 512;
  std::uint32_t hidden_video = 512;
  std::uint32_t hidden_decoder = 128;

  std::uint32_t decoder_out_dim() const { return dim_text_in; }
  void validate() const;

  bool operator==(const ArchitectureSpec&) const = default;
};

/// Parameters of the three projection networks and the shared decoder.
/// F_A, F_V, F_DEC are two-layer; F_T is a single affine map.
struct ModelParams {
  LayerParams f_a1, f_a2;
  LayerParams f_v1, f_v2;
  LayerParams f_t;
  LayerParams f_dec1, f_dec2;
  ArchitectureSpec arch;

  std::array<const LayerParams*, 7> layers() const {
    return {&f_a1, &f_a2, &f_v1, &f_v2, &f_t, &f_dec1, &f_dec2};
  }
  std::array<LayerParams*, 7> layers() {
    return {&f_a1, &f_a2, &f_v1, &f_v2, &f_t, &f_dec1, &f_dec2};
  }

  bool operator==(const ModelParams&) const = default;
};

struct EmbeddingTriple {
  Vec a, v, t;
};

/// Zero-shaped parameters for the given architecture.
ModelParams make_params(const ArchitectureSpec& arch);

/// Uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero biases, deterministic
/// per seed.
ModelParams init_params(const ArchitectureSpec& arch, std::uint64_t seed);

// Pure (untaped) forward passes.
Vec embed_audio(const ModelParams& params, const Vec& x_a);
Vec embed_video(const ModelParams& params, const Vec& x_v);
Vec embed_text(const ModelParams& params, const Vec& x_t);
Vec decode(const ModelParams& params, const Vec& e);

/// Binds one ModelParams onto a tape so losses can be differentiated.
/// Leaves are registered once; the decoder leaves are shared by every
/// decode call regardless of source modality.
class TapedModel {
 public:
  TapedModel(Tape& tape, const ModelParams& params);

  VarId embed_audio(VarId x_a);
  VarId embed_video(VarId x_v);
  VarId embed_text(VarId x_t);
  VarId decode(VarId e);

  /// Gradients of all parameters in the fixed layer order, flattened.
  /// Valid after tape.backward().
  Vec collect_gradients() const;

  Tape& tape() { return *tape_; }

 private:
  Tape* tape_;
  const ModelParams* params_;
  std::array<VarId, 7> w_;
  std::array<VarId, 7> b_;
};

/// Parameter vector round-trip in the fixed layer order f_a1, f_a2, f_v1,
/// f_v2, f_t, f_dec1, f_dec2 (weight row-major, then bias, per layer).
std::size_t param_count(const ArchitectureSpec& arch);
Vec flatten(const ModelParams& params);
ModelParams unflatten(const ArchitectureSpec& arch, const Vec& flat);

struct CheckpointError : std::runtime_error {
  enum class Kind { Io, BadMagic, VersionMismatch, Truncated, ShapeMismatch };
  Kind kind;
  CheckpointError(Kind k, const std::string& what) : std::runtime_error(what), kind(k) {}
};

void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace avgzsl::model
