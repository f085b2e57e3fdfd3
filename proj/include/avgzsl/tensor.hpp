#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace avgzsl::tensor {

using Vec = std::vector<double>;

struct DimensionError : std::runtime_error {
  DimensionError(const std::string& where, std::size_t expected, std::size_t actual)
      : std::runtime_error(where + ": expected dim " + std::to_string(expected) +
                           ", got " + std::to_string(actual)) {}
};

struct NonFiniteError : std::runtime_error {
  explicit NonFiniteError(const std::string& what) : std::runtime_error(what) {}
};

/// Row-major dense matrix of 64-bit reals.
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec data;

  DenseMatrix() = default;
  DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  static DenseMatrix identity(std::size_t n);

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  bool operator==(const DenseMatrix&) const = default;
};

/// Weight and bias of one fully connected layer (weight is out_dim x in_dim).
struct LayerParams {
  DenseMatrix weight;
  Vec bias;

  LayerParams() = default;
  LayerParams(std::size_t out_dim, std::size_t in_dim)
      : weight(out_dim, in_dim), bias(out_dim, 0.0) {}

  std::size_t in_dim() const { return weight.cols; }
  std::size_t out_dim() const { return weight.rows; }

  bool operator==(const LayerParams&) const = default;
};

/// Handle to a value recorded on a Tape.
struct VarId {
  std::size_t index = static_cast<std::size_t>(-1);
  bool valid() const { return index != static_cast<std::size_t>(-1); }
};

/// Reverse-mode tape over vector-valued nodes. One tape is owned by one
/// training step; inputs are never mutated.
class Tape {
 public:
  VarId leaf(Vec value);
  VarId leaf_matrix(const DenseMatrix& m);

  /// weight*x + bias, with weight a flattened out_dim x in_dim leaf.
  VarId affine(VarId weight, VarId bias, VarId x, std::size_t out_dim, std::size_t in_dim);
  VarId relu(VarId x);
  /// Mean over coordinates of squared differences; scalar result.
  VarId mse(VarId u, VarId v);
  VarId add(VarId a, VarId b);
  VarId sub(VarId a, VarId b);
  VarId add_scalar(VarId a, double c);
  VarId scale(VarId a, double c);
  VarId zero_scalar();

  const Vec& value(VarId id) const;
  double scalar_value(VarId id) const;

  /// Accumulates d(root)/d(node) into every node's grad buffer. root must be
  /// scalar. Each node is visited exactly once, in reverse creation order.
  void backward(VarId root);
  const Vec& grad(VarId id) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t { Leaf, Affine, Relu, Mse, Add, Sub, AddScalar, Scale };

  struct Node {
    Op op = Op::Leaf;
    VarId a, b, c;
    std::size_t out_dim = 0;
    std::size_t in_dim = 0;
    double k = 0.0;
    Vec value;
    Vec grad;
  };

  VarId push(Node n);
  void backprop_node(std::size_t i);

  std::vector<Node> nodes_;
  bool grads_ready_ = false;
};

/// Pure forward of one fully connected layer (no tape).
Vec affine_forward(const LayerParams& layer, const Vec& x);
/// Elementwise max(0, x) (no tape).
Vec relu_forward(Vec x);

/// Central finite differences of f around `at`, step epsilon per coordinate.
/// Independent of the tape machinery by construction.
Vec finite_diff_gradient(const std::function<double(const Vec&)>& f, const Vec& at,
                         double epsilon);

/// |a-b| / max(1e-8, |a|+|b|).
double relative_error(double a, double b);

void ensure_all_finite(const Vec& v, const char* where);

}  // namespace avgzsl::tensor
