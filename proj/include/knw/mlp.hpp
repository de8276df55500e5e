#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "knw/errors.hpp"
#include "knw/jet.hpp"
#include "knw/linalg.hpp"
#include "knw/params.hpp"
#include "knw/rng.hpp"
#include "knw/tape.hpp"

namespace knw {

enum class Activation : std::uint8_t { sine = 0, tanh = 1 };

inline const char* activation_name(Activation a) {
  return a == Activation::sine ? "sine" : "tanh";
}

// Fully connected network with `depth` hidden layers of uniform `width`.
// The activation applies to every hidden layer; the optional output layer
// (output_dim > 0) is linear. output_dim == 0 means the last hidden layer is
// the network's product, which is how basis-producing bodies and trunks are
// described: each of the `width` activations there is one basis function.
struct MLPSpec {
  std::size_t input_dim = 1;
  std::size_t width = 20;
  std::size_t depth = 2;
  std::size_t output_dim = 0;
  Activation activation = Activation::tanh;
  // Multiplies the first-layer weights at initialisation. Raising it widens
  // the frequency content of sine networks at the start of training.
  double first_layer_scale = 1.0;

  std::size_t n_basis() const { return width; }

  void validate() const {
    if (input_dim == 0 || width == 0 || depth == 0)
      throw ContractViolation("MLPSpec: dimensions must be positive");
  }
};

inline std::size_t mlp_param_count(const MLPSpec& s) {
  std::size_t n = 0, in = s.input_dim;
  for (std::size_t l = 0; l < s.depth; ++l) {
    n += s.width * in + s.width;
    in = s.width;
  }
  if (s.output_dim > 0) n += s.output_dim * in + s.output_dim;
  return n;
}

// Appends weight/bias blocks for every layer under `prefix` ("prefix.w0",
// "prefix.b0", ...). Returns the offset of the first appended block.
inline std::size_t mlp_add_layout(const MLPSpec& s, ParameterVector& pv,
                                  const std::string& prefix) {
  std::size_t first = pv.size(), in = s.input_dim;
  for (std::size_t l = 0; l < s.depth; ++l) {
    pv.add_block(prefix + ".w" + std::to_string(l), s.width, in);
    pv.add_block(prefix + ".b" + std::to_string(l), s.width, 1);
    in = s.width;
  }
  if (s.output_dim > 0) {
    pv.add_block(prefix + ".wout", s.output_dim, in);
    pv.add_block(prefix + ".bout", s.output_dim, 1);
  }
  return first;
}

// Glorot-uniform initialisation for weights and biases of every layer, drawn
// in a fixed order (per layer: weights row-major, then biases) so a given
// generator state always produces the same network.
inline void mlp_init_params(const MLPSpec& s, Rng& rng, std::span<double> out) {
  if (out.size() != mlp_param_count(s))
    throw ContractViolation("mlp_init_params: bad output size");
  std::size_t pos = 0, in = s.input_dim;
  auto fill_layer = [&](std::size_t rows, std::size_t cols, double wscale) {
    double lim = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (std::size_t i = 0; i < rows * cols; ++i)
      out[pos++] = wscale * rng.uniform(-lim, lim);
    for (std::size_t i = 0; i < rows; ++i) out[pos++] = rng.uniform(-lim, lim);
  };
  for (std::size_t l = 0; l < s.depth; ++l) {
    fill_layer(s.width, in, l == 0 ? s.first_layer_scale : 1.0);
    in = s.width;
  }
  if (s.output_dim > 0) fill_layer(s.output_dim, in, 1.0);
}

namespace detail {

inline double muladd(double a, double b, double c) { return a * b + c; }
inline Value muladd(Value a, Value b, Value c) { return fmadd(a, b, c); }

template <class T>
void apply_activation(Activation act, std::vector<Jet2<T>>& v) {
  if (act == Activation::sine)
    for (auto& z : v) z = sin(z);
  else
    for (auto& z : v) z = tanh(z);
}

template <class T>
void apply_activation_plain(Activation act, std::vector<T>& v) {
  using std::sin;
  using std::tanh;
  if (act == Activation::sine)
    for (auto& z : v) z = sin(z);
  else
    for (auto& z : v) z = tanh(z);
}

}  // namespace detail

// Hidden-layer activations without derivatives. T follows the parameter span:
// plain doubles evaluate directly, tape values record the computation.
template <class T, class Ctx>
void mlp_hidden(const MLPSpec& s, std::span<const T> params,
                std::span<const double> x, const Ctx& ctx, std::vector<T>& out) {
  if (x.size() != s.input_dim) throw ContractViolation("mlp_hidden: bad input size");
  std::vector<T> in;
  in.reserve(s.input_dim);
  for (double xi : x) in.push_back(ctx.c(xi));

  std::size_t pos = 0;
  out.clear();
  for (std::size_t l = 0; l < s.depth; ++l) {
    const std::size_t fan_in = in.size();
    std::vector<T> z;
    z.reserve(s.width);
    for (std::size_t i = 0; i < s.width; ++i) {
      T acc = params[pos + s.width * fan_in + i];  // bias
      const T* w = params.data() + pos + i * fan_in;
      for (std::size_t j = 0; j < fan_in; ++j)
        acc = detail::muladd(w[j], in[j], acc);
      z.push_back(acc);
    }
    detail::apply_activation_plain(s.activation, z);
    pos += s.width * fan_in + s.width;
    in = std::move(z);
  }
  out = std::move(in);
}

// Hidden-layer activations as second-order jets along `dir`. One call covers
// one direction; a Laplacian in d dimensions takes d calls with coordinate
// directions.
template <class T, class Ctx>
void mlp_hidden_jets(const MLPSpec& s, std::span<const T> params,
                     std::span<const double> x, std::span<const double> dir,
                     const Ctx& ctx, std::vector<Jet2<T>>& out) {
  if (x.size() != s.input_dim || dir.size() != s.input_dim)
    throw ContractViolation("mlp_hidden_jets: bad input size");
  std::vector<Jet2<T>> in;
  in.reserve(s.input_dim);
  for (std::size_t j = 0; j < s.input_dim; ++j)
    in.push_back(Jet2<T>{ctx.c(x[j]), ctx.c(dir[j]), ctx.zero()});

  std::size_t pos = 0;
  for (std::size_t l = 0; l < s.depth; ++l) {
    const std::size_t fan_in = in.size();
    std::vector<Jet2<T>> z;
    z.reserve(s.width);
    for (std::size_t i = 0; i < s.width; ++i) {
      Jet2<T> acc{params[pos + s.width * fan_in + i], ctx.zero(), ctx.zero()};
      const T* w = params.data() + pos + i * fan_in;
      for (std::size_t j = 0; j < fan_in; ++j) {
        acc.f = detail::muladd(w[j], in[j].f, acc.f);
        acc.d1 = detail::muladd(w[j], in[j].d1, acc.d1);
        acc.d2 = detail::muladd(w[j], in[j].d2, acc.d2);
      }
      z.push_back(acc);
    }
    detail::apply_activation(s.activation, z);
    pos += s.width * fan_in + s.width;
    in = std::move(z);
  }
  out = std::move(in);
}

// Applies the linear output layer to hidden activations.
template <class T>
void mlp_output(const MLPSpec& s, std::span<const T> params,
                std::span<const T> hidden, std::vector<T>& out) {
  if (s.output_dim == 0) throw ContractViolation("mlp_output: spec has no output layer");
  std::size_t pos = mlp_param_count(s) - s.output_dim * s.width - s.output_dim;
  out.clear();
  out.reserve(s.output_dim);
  for (std::size_t i = 0; i < s.output_dim; ++i) {
    T acc = params[pos + s.output_dim * s.width + i];
    const T* w = params.data() + pos + i * s.width;
    for (std::size_t j = 0; j < s.width; ++j)
      acc = detail::muladd(w[j], hidden[j], acc);
    out.push_back(acc);
  }
}

// Plain forward pass returning hidden activations and (if present) outputs.
inline void mlp_forward(const MLPSpec& s, std::span<const double> params,
                        std::span<const double> x, std::vector<double>& hidden,
                        std::vector<double>& output) {
  mlp_hidden<double>(s, params, x, DoubleCtx{}, hidden);
  output.clear();
  if (s.output_dim > 0)
    mlp_output<double>(s, params, std::span<const double>(hidden), output);
}

namespace detail {
inline void require_unit(std::span<const double> dir) {
  if (std::abs(norm2(dir) - 1.0) > 1e-12)
    throw ContractViolation("direction must have unit norm");
}
}  // namespace detail

// Value and first/second directional derivatives of a scalar-output network.
inline Jet2<double> jet2_forward(const MLPSpec& s, std::span<const double> params,
                                 std::span<const double> x,
                                 std::span<const double> dir) {
  if (s.output_dim != 1)
    throw ContractViolation("jet2_forward: network must have one output");
  detail::require_unit(dir);
  std::vector<Jet2<double>> h;
  mlp_hidden_jets<double>(s, params, x, dir, DoubleCtx{}, h);
  std::size_t pos = mlp_param_count(s) - s.width - 1;
  Jet2<double> acc{params[pos + s.width], 0.0, 0.0};
  for (std::size_t j = 0; j < s.width; ++j) {
    acc.f += params[pos + j] * h[j].f;
    acc.d1 += params[pos + j] * h[j].d1;
    acc.d2 += params[pos + j] * h[j].d2;
  }
  return acc;
}

// Same jet recorded on a tape, so downstream objectives stay differentiable
// with respect to the parameters, second derivatives included.
inline Jet2<Value> jet2_forward_tape(Tape& tape, const MLPSpec& s,
                                     std::span<const Value> params,
                                     std::span<const double> x,
                                     std::span<const double> dir) {
  if (s.output_dim != 1)
    throw ContractViolation("jet2_forward_tape: network must have one output");
  detail::require_unit(dir);
  TapeCtx ctx{&tape};
  std::vector<Jet2<Value>> h;
  mlp_hidden_jets<Value>(s, params, x, dir, ctx, h);
  std::size_t pos = mlp_param_count(s) - s.width - 1;
  Jet2<Value> acc{params[pos + s.width], ctx.zero(), ctx.zero()};
  for (std::size_t j = 0; j < s.width; ++j) {
    acc.f = fmadd(params[pos + j], h[j].f, acc.f);
    acc.d1 = fmadd(params[pos + j], h[j].d1, acc.d1);
    acc.d2 = fmadd(params[pos + j], h[j].d2, acc.d2);
  }
  return acc;
}

}  // namespace knw
