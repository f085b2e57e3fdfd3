#include "avgzsl/tensor.hpp"

#include <cmath>
#include <cstdlib>

namespace avgzsl::tensor {

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

void ensure_all_finite(const Vec& v, const char* where) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw NonFiniteError(std::string(where) + ": non-finite value at coordinate " +
                           std::to_string(i));
    }
  }
}

VarId Tape::push(Node n) {
  grads_ready_ = false;
  nodes_.push_back(std::move(n));
  return VarId{nodes_.size() - 1};
}

VarId Tape::leaf(Vec value) {
  ensure_all_finite(value, "leaf");
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  return push(std::move(n));
}

VarId Tape::leaf_matrix(const DenseMatrix& m) {
  Node n;
  n.op = Op::Leaf;
  n.value = m.data;
  n.out_dim = m.rows;
  n.in_dim = m.cols;
  ensure_all_finite(n.value, "leaf_matrix");
  return push(std::move(n));
}

VarId Tape::affine(VarId weight, VarId bias, VarId x, std::size_t out_dim,
                   std::size_t in_dim) {
  const Vec& w = value(weight);
  const Vec& b = value(bias);
  const Vec& xv = value(x);
  if (w.size() != out_dim * in_dim) throw DimensionError("affine weight", out_dim * in_dim, w.size());
  if (b.size() != out_dim) throw DimensionError("affine bias", out_dim, b.size());
  if (xv.size() != in_dim) throw DimensionError("affine input", in_dim, xv.size());

  Node n;
  n.op = Op::Affine;
  n.a = weight;
  n.b = bias;
  n.c = x;
  n.out_dim = out_dim;
  n.in_dim = in_dim;
  n.value.resize(out_dim);
  for (std::size_t r = 0; r < out_dim; ++r) {
    const double* wr = w.data() + r * in_dim;
    double acc = b[r];
    for (std::size_t c = 0; c < in_dim; ++c) acc += wr[c] * xv[c];
    n.value[r] = acc;
  }
  ensure_all_finite(n.value, "affine");
  return push(std::move(n));
}

VarId Tape::relu(VarId x) {
  Node n;
  n.op = Op::Relu;
  n.a = x;
  n.value = value(x);
  for (double& v : n.value) v = v > 0.0 ? v : 0.0;
  return push(std::move(n));
}

VarId Tape::mse(VarId u, VarId v) {
  const Vec& uv = value(u);
  const Vec& vv = value(v);
  if (uv.size() != vv.size()) throw DimensionError("mse", uv.size(), vv.size());
  Node n;
  n.op = Op::Mse;
  n.a = u;
  n.b = v;
  double acc = 0.0;
  for (std::size_t i = 0; i < uv.size(); ++i) {
    const double d = uv[i] - vv[i];
    acc += d * d;
  }
  n.value = {acc / static_cast<double>(uv.size())};
  ensure_all_finite(n.value, "mse");
  return push(std::move(n));
}

VarId Tape::add(VarId a, VarId b) {
  const Vec& av = value(a);
  const Vec& bv = value(b);
  if (av.size() != bv.size()) throw DimensionError("add", av.size(), bv.size());
  Node n;
  n.op = Op::Add;
  n.a = a;
  n.b = b;
  n.value.resize(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = av[i] + bv[i];
  ensure_all_finite(n.value, "add");
  return push(std::move(n));
}

VarId Tape::sub(VarId a, VarId b) {
  const Vec& av = value(a);
  const Vec& bv = value(b);
  if (av.size() != bv.size()) throw DimensionError("sub", av.size(), bv.size());
  Node n;
  n.op = Op::Sub;
  n.a = a;
  n.b = b;
  n.value.resize(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = av[i] - bv[i];
  ensure_all_finite(n.value, "sub");
  return push(std::move(n));
}

VarId Tape::add_scalar(VarId a, double c) {
  Node n;
  n.op = Op::AddScalar;
  n.a = a;
  n.k = c;
  n.value = value(a);
  for (double& v : n.value) v += c;
  ensure_all_finite(n.value, "add_scalar");
  return push(std::move(n));
}

VarId Tape::scale(VarId a, double c) {
  Node n;
  n.op = Op::Scale;
  n.a = a;
  n.k = c;
  n.value = value(a);
  for (double& v : n.value) v *= c;
  ensure_all_finite(n.value, "scale");
  return push(std::move(n));
}

VarId Tape::zero_scalar() { return leaf(Vec{0.0}); }

const Vec& Tape::value(VarId id) const {
  if (!id.valid() || id.index >= nodes_.size()) throw std::out_of_range("invalid VarId");
  return nodes_[id.index].value;
}

double Tape::scalar_value(VarId id) const {
  const Vec& v = value(id);
  if (v.size() != 1) throw DimensionError("scalar_value", 1, v.size());
  return v[0];
}

void Tape::backward(VarId root) {
  if (!root.valid() || root.index >= nodes_.size()) throw std::out_of_range("invalid VarId");
  if (nodes_[root.index].value.size() != 1) {
    throw DimensionError("backward root", 1, nodes_[root.index].value.size());
  }
  for (Node& n : nodes_) n.grad.assign(n.value.size(), 0.0);
  nodes_[root.index].grad[0] = 1.0;
  for (std::size_t i = root.index + 1; i-- > 0;) backprop_node(i);
  grads_ready_ = true;
}

void Tape::backprop_node(std::size_t i) {
  Node& n = nodes_[i];
  switch (n.op) {
    case Op::Leaf:
      break;
    case Op::Affine: {
      Vec& dw = nodes_[n.a.index].grad;
      Vec& db = nodes_[n.b.index].grad;
      Vec& dx = nodes_[n.c.index].grad;
      const Vec& w = nodes_[n.a.index].value;
      const Vec& x = nodes_[n.c.index].value;
      for (std::size_t r = 0; r < n.out_dim; ++r) {
        const double g = n.grad[r];
        if (g == 0.0) continue;
        db[r] += g;
        double* dwr = dw.data() + r * n.in_dim;
        const double* wr = w.data() + r * n.in_dim;
        for (std::size_t c = 0; c < n.in_dim; ++c) {
          dwr[c] += g * x[c];
          dx[c] += g * wr[c];
        }
      }
      break;
    }
    case Op::Relu: {
      Vec& dx = nodes_[n.a.index].grad;
      for (std::size_t j = 0; j < n.value.size(); ++j) {
        if (n.value[j] > 0.0) dx[j] += n.grad[j];
      }
      break;
    }
    case Op::Mse: {
      Vec& du = nodes_[n.a.index].grad;
      Vec& dv = nodes_[n.b.index].grad;
      const Vec& u = nodes_[n.a.index].value;
      const Vec& v = nodes_[n.b.index].value;
      const double g = n.grad[0] * 2.0 / static_cast<double>(u.size());
      for (std::size_t j = 0; j < u.size(); ++j) {
        const double d = g * (u[j] - v[j]);
        du[j] += d;
        dv[j] -= d;
      }
      break;
    }
    case Op::Add: {
      Vec& da = nodes_[n.a.index].grad;
      Vec& db = nodes_[n.b.index].grad;
      for (std::size_t j = 0; j < n.grad.size(); ++j) {
        da[j] += n.grad[j];
        db[j] += n.grad[j];
      }
      break;
    }
    case Op::Sub: {
      Vec& da = nodes_[n.a.index].grad;
      Vec& db = nodes_[n.b.index].grad;
      for (std::size_t j = 0; j < n.grad.size(); ++j) {
        da[j] += n.grad[j];
        db[j] -= n.grad[j];
      }
      break;
    }
    case Op::AddScalar: {
      Vec& da = nodes_[n.a.index].grad;
      for (std::size_t j = 0; j < n.grad.size(); ++j) da[j] += n.grad[j];
      break;
    }
    case Op::Scale: {
      Vec& da = nodes_[n.a.index].grad;
      for (std::size_t j = 0; j < n.grad.size(); ++j) da[j] += n.k * n.grad[j];
      break;
    }
  }
}

const Vec& Tape::grad(VarId id) const {
  if (!grads_ready_) throw std::logic_error("grad requested before backward");
  if (!id.valid() || id.index >= nodes_.size()) throw std::out_of_range("invalid VarId");
  return nodes_[id.index].grad;
}

Vec affine_forward(const LayerParams& layer, const Vec& x) {
  if (x.size() != layer.in_dim()) throw DimensionError("affine_forward", layer.in_dim(), x.size());
  Vec out(layer.out_dim());
  for (std::size_t r = 0; r < layer.out_dim(); ++r) {
    const double* wr = layer.weight.data.data() + r * layer.in_dim();
    double acc = layer.bias[r];
    for (std::size_t c = 0; c < layer.in_dim(); ++c) acc += wr[c] * x[c];
    out[r] = acc;
  }
  ensure_all_finite(out, "affine_forward");
  return out;
}

Vec relu_forward(Vec x) {
  for (double& v : x) v = v > 0.0 ? v : 0.0;
  return x;
}

Vec finite_diff_gradient(const std::function<double(const Vec&)>& f, const Vec& at,
                         double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("finite_diff_gradient: epsilon must be > 0");
  Vec p = at;
  Vec g(at.size());
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + epsilon;
    const double fp = f(p);
    p[i] = saved - epsilon;
    const double fm = f(p);
    p[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NonFiniteError("finite_diff_gradient: non-finite loss at coordinate " +
                           std::to_string(i));
    }
    g[i] = (fp - fm) / (2.0 * epsilon);
  }
  return g;
}

double relative_error(double a, double b) {
  const double denom = std::abs(a) + std::abs(b);
  return std::abs(a - b) / (denom > 1e-8 ? denom : 1e-8);
}

}  // namespace avgzsl::tensor
