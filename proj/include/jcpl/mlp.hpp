#pragma once

// Minimal differentiable multilayer perceptron with explicit reverse-mode
// backprop and Adam. Batches are stored column-wise (one sample per column)
// so every layer is a single GEMM.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "jcpl/rng.hpp"

namespace jcpl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { relu, linear };

struct Mlp {
  std::vector<int> dims;        // e.g. {7, 8, 4, 2}
  std::vector<Matrix> weights;  // weights[l]: dims[l+1] x dims[l]
  std::vector<Vector> biases;
  Activation hidden = Activation::relu;  // output layer is always linear

  int input_dim() const { return dims.front(); }
  int output_dim() const { return dims.back(); }
  int layers() const { return static_cast<int>(weights.size()); }

  long parameter_count() const {
    long n = 0;
    for (int l = 0; l < layers(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  bool finite() const {
    for (int l = 0; l < layers(); ++l)
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    return true;
  }
};

// Uniform fan-in init, bound 1/sqrt(fan_in) for weights and biases.
inline Mlp make_mlp(const std::vector<int>& dims, std::mt19937_64& rng,
                    Activation hidden = Activation::relu) {
  if (dims.size() < 2) throw std::invalid_argument("mlp needs at least two layer dims");
  Mlp net;
  net.dims = dims;
  net.hidden = hidden;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    Matrix w(dims[l + 1], dims[l]);
    for (int j = 0; j < w.cols(); ++j)
      for (int i = 0; i < w.rows(); ++i) w(i, j) = uniform_real(rng, -bound, bound);
    Vector b(dims[l + 1]);
    for (int i = 0; i < b.size(); ++i) b(i) = uniform_real(rng, -bound, bound);
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
  }
  return net;
}

// Activation record of one forward pass. acts[0] is the input batch,
// acts[l+1] the post-activation output of layer l. Needed for backward and
// for chaining input gradients across composed networks.
struct Tape {
  std::vector<Matrix> acts;
  bool recorded() const { return !acts.empty(); }
  void clear() { acts.clear(); }
};

inline const Matrix& forward(const Mlp& net, const Matrix& input, Tape& tape) {
  if (input.rows() != net.input_dim())
    throw std::invalid_argument("mlp forward: input has " + std::to_string(input.rows()) +
                                " rows, expected " + std::to_string(net.input_dim()));
  tape.acts.clear();
  tape.acts.reserve(net.layers() + 1);
  tape.acts.push_back(input);
  for (int l = 0; l < net.layers(); ++l) {
    Matrix z = (net.weights[l] * tape.acts.back()).colwise() + net.biases[l];
    if (l + 1 < net.layers() && net.hidden == Activation::relu) z = z.cwiseMax(0.0);
    tape.acts.push_back(std::move(z));
  }
  return tape.acts.back();
}

inline Matrix forward(const Mlp& net, const Matrix& input) {
  Tape tape;
  return forward(net, input, tape);
}

inline Vector forward(const Mlp& net, const Vector& input) {
  Tape tape;
  return forward(net, Matrix(input), tape);
}

struct MlpGrads {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  void set_zero() {
    for (auto& w : weights) w.setZero();
    for (auto& b : biases) b.setZero();
  }
  bool finite() const {
    for (const auto& w : weights)
      if (!w.allFinite()) return false;
    for (const auto& b : biases)
      if (!b.allFinite()) return false;
    return true;
  }
};

inline MlpGrads zeros_like(const Mlp& net) {
  MlpGrads g;
  for (int l = 0; l < net.layers(); ++l) {
    g.weights.emplace_back(Matrix::Zero(net.weights[l].rows(), net.weights[l].cols()));
    g.biases.emplace_back(Vector::Zero(net.biases[l].size()));
  }
  return g;
}

// Reverse pass for the forward recorded in `tape`. `d_output` is dLoss/dOutput.
// Parameter gradients are accumulated into `grads` when non-null (so several
// losses can share one gradient buffer). Returns dLoss/dInput when
// want_input_grad, otherwise an empty matrix.
inline Matrix backward(const Mlp& net, const Tape& tape, const Matrix& d_output,
                       MlpGrads* grads, bool want_input_grad = false) {
  if (!tape.recorded() || static_cast<int>(tape.acts.size()) != net.layers() + 1)
    throw std::logic_error("mlp backward without a matching forward");
  if (d_output.rows() != net.output_dim() || d_output.cols() != tape.acts.back().cols())
    throw std::invalid_argument("mlp backward: output gradient shape mismatch");

  Matrix delta = d_output;
  for (int l = net.layers() - 1; l >= 0; --l) {
    if (l + 1 < net.layers() && net.hidden == Activation::relu)
      delta = delta.cwiseProduct((tape.acts[l + 1].array() > 0.0).cast<double>().matrix());
    if (grads) {
      grads->weights[l].noalias() += delta * tape.acts[l].transpose();
      grads->biases[l].noalias() += delta.rowwise().sum();
    }
    if (l > 0 || want_input_grad) {
      Matrix prev = net.weights[l].transpose() * delta;
      delta = std::move(prev);
    }
  }
  return want_input_grad ? delta : Matrix();
}

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step_count = 0;
  std::vector<Matrix> m_w, v_w;
  std::vector<Vector> m_b, v_b;
};

inline AdamState make_adam(const Mlp& net, double lr) {
  AdamState st;
  st.lr = lr;
  for (int l = 0; l < net.layers(); ++l) {
    st.m_w.emplace_back(Matrix::Zero(net.weights[l].rows(), net.weights[l].cols()));
    st.v_w.emplace_back(Matrix::Zero(net.weights[l].rows(), net.weights[l].cols()));
    st.m_b.emplace_back(Vector::Zero(net.biases[l].size()));
    st.v_b.emplace_back(Vector::Zero(net.biases[l].size()));
  }
  return st;
}

// Bias-corrected Adam. Rejects the update (returns false, parameters and
// moments untouched) when the gradients are not finite.
inline bool adam_step(Mlp& net, const MlpGrads& grads, AdamState& st) {
  if (!grads.finite()) return false;
  st.step_count += 1;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step_count));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step_count));
  for (int l = 0; l < net.layers(); ++l) {
    st.m_w[l] = st.beta1 * st.m_w[l] + (1.0 - st.beta1) * grads.weights[l];
    st.v_w[l].array() = st.beta2 * st.v_w[l].array() +
                        (1.0 - st.beta2) * grads.weights[l].array().square();
    net.weights[l].array() -=
        st.lr * (st.m_w[l].array() / bc1) / ((st.v_w[l].array() / bc2).sqrt() + st.eps);
    st.m_b[l] = st.beta1 * st.m_b[l] + (1.0 - st.beta1) * grads.biases[l];
    st.v_b[l].array() =
        st.beta2 * st.v_b[l].array() + (1.0 - st.beta2) * grads.biases[l].array().square();
    net.biases[l].array() -=
        st.lr * (st.m_b[l].array() / bc1) / ((st.v_b[l].array() / bc2).sqrt() + st.eps);
  }
  return true;
}

struct ScalarAdam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step_count = 0;
  double m = 0.0;
  double v = 0.0;
};

inline bool scalar_adam_step(double& param, double grad, ScalarAdam& st) {
  if (!std::isfinite(grad)) return false;
  st.step_count += 1;
  st.m = st.beta1 * st.m + (1.0 - st.beta1) * grad;
  st.v = st.beta2 * st.v + (1.0 - st.beta2) * grad * grad;
  const double mhat = st.m / (1.0 - std::pow(st.beta1, static_cast<double>(st.step_count)));
  const double vhat = st.v / (1.0 - std::pow(st.beta2, static_cast<double>(st.step_count)));
  param -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
  return true;
}

// FNV-1a over the raw parameter bytes; used for bit-exact frozen-parameter checks.
inline std::uint64_t param_hash(const Mlp& net) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const double* p, long n) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p);
    for (long i = 0; i < n * static_cast<long>(sizeof(double)); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (int l = 0; l < net.layers(); ++l) {
    mix(net.weights[l].data(), net.weights[l].size());
    mix(net.biases[l].data(), net.biases[l].size());
  }
  return h;
}

// --- binary parameter serialization (little-endian doubles, row-major) ---

namespace detail {

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("truncated parameter stream");
  return v;
}

}  // namespace detail

inline void write_mlp(std::ostream& os, const Mlp& net) {
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(net.dims.size()));
  for (int d : net.dims) detail::write_pod<std::int32_t>(os, d);
  detail::write_pod<std::uint8_t>(os, net.hidden == Activation::relu ? 1 : 0);
  for (int l = 0; l < net.layers(); ++l) {
    const Matrix& w = net.weights[l];
    for (int i = 0; i < w.rows(); ++i)
      for (int j = 0; j < w.cols(); ++j) detail::write_pod<double>(os, w(i, j));
    for (int i = 0; i < net.biases[l].size(); ++i)
      detail::write_pod<double>(os, net.biases[l](i));
  }
}

inline Mlp read_mlp(std::istream& is) {
  Mlp net;
  const auto ndims = detail::read_pod<std::uint32_t>(is);
  if (ndims < 2 || ndims > 64) throw std::runtime_error("corrupt parameter stream");
  net.dims.resize(ndims);
  for (auto& d : net.dims) d = detail::read_pod<std::int32_t>(is);
  net.hidden = detail::read_pod<std::uint8_t>(is) ? Activation::relu : Activation::linear;
  for (std::size_t l = 0; l + 1 < net.dims.size(); ++l) {
    Matrix w(net.dims[l + 1], net.dims[l]);
    for (int i = 0; i < w.rows(); ++i)
      for (int j = 0; j < w.cols(); ++j) w(i, j) = detail::read_pod<double>(is);
    Vector b(net.dims[l + 1]);
    for (int i = 0; i < b.size(); ++i) b(i) = detail::read_pod<double>(is);
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
  }
  return net;
}

inline void write_adam(std::ostream& os, const AdamState& st) {
  detail::write_pod<double>(os, st.lr);
  detail::write_pod<double>(os, st.beta1);
  detail::write_pod<double>(os, st.beta2);
  detail::write_pod<double>(os, st.eps);
  detail::write_pod<std::int64_t>(os, st.step_count);
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(st.m_w.size()));
  auto write_mat = [&os](const Matrix& m) {
    detail::write_pod<std::int32_t>(os, static_cast<std::int32_t>(m.rows()));
    detail::write_pod<std::int32_t>(os, static_cast<std::int32_t>(m.cols()));
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j) detail::write_pod<double>(os, m(i, j));
  };
  for (std::size_t l = 0; l < st.m_w.size(); ++l) {
    write_mat(st.m_w[l]);
    write_mat(st.v_w[l]);
    write_mat(st.m_b[l]);
    write_mat(st.v_b[l]);
  }
}

inline AdamState read_adam(std::istream& is) {
  AdamState st;
  st.lr = detail::read_pod<double>(is);
  st.beta1 = detail::read_pod<double>(is);
  st.beta2 = detail::read_pod<double>(is);
  st.eps = detail::read_pod<double>(is);
  st.step_count = detail::read_pod<std::int64_t>(is);
  const auto layers = detail::read_pod<std::uint32_t>(is);
  auto read_mat = [&is]() {
    const auto rows = detail::read_pod<std::int32_t>(is);
    const auto cols = detail::read_pod<std::int32_t>(is);
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) m(i, j) = detail::read_pod<double>(is);
    return m;
  };
  for (std::uint32_t l = 0; l < layers; ++l) {
    st.m_w.push_back(read_mat());
    st.v_w.push_back(read_mat());
    st.m_b.push_back(Vector(read_mat()));
    st.v_b.push_back(Vector(read_mat()));
  }
  return st;
}

}  // namespace jcpl
