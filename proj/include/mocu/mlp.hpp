#ifndef MOCU_MLP_HPP
#define MOCU_MLP_HPP

// Plain fully connected networks over a flat 64-bit parameter vector. Two
// execution paths share the weights: a double-precision eval for simulation
// and benchmarks, and a Tape binding for training.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "mocu/rng.hpp"
#include "mocu/tape.hpp"

namespace mocu {

enum class Activation { Gelu, Relu, Identity };

inline std::string activationName(Activation a) {
  switch (a) {
    case Activation::Gelu: return "gelu";
    case Activation::Relu: return "relu";
    default: return "identity";
  }
}

inline Activation activationFromName(const std::string& s) {
  if (s == "gelu") return Activation::Gelu;
  if (s == "relu") return Activation::Relu;
  if (s == "identity") return Activation::Identity;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

struct MlpSpec {
  int inputDim = 0;
  int outputDim = 0;
  int hiddenLayers = 1;  // hidden layer count; affine maps = hiddenLayers + 1
  int hiddenWidth = 64;
  Activation activation = Activation::Gelu;
  bool bias = false;

  bool operator==(const MlpSpec&) const = default;
};

inline std::vector<int> layerDims(const MlpSpec& s) {
  std::vector<int> d;
  d.push_back(s.inputDim);
  for (int i = 0; i < s.hiddenLayers; ++i) d.push_back(s.hiddenWidth);
  d.push_back(s.outputDim);
  return d;
}

inline std::size_t paramCount(const MlpSpec& s) {
  const auto d = layerDims(s);
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < d.size(); ++l) {
    n += std::size_t(d[l]) * d[l + 1];
    if (s.bias) n += d[l + 1];
  }
  return n;
}

struct Mlp {
  MlpSpec spec;
  std::vector<double> params;  // per layer: W (in x out, row-major), then bias
};

// uniform +-sqrt(1/fan_in), counter-based stream so init is order independent
inline Mlp initMlp(const MlpSpec& spec, uint64_t seed, uint64_t stream) {
  Mlp net;
  net.spec = spec;
  net.params.resize(paramCount(spec));
  Rng rng(seed, stream);
  const auto d = layerDims(spec);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < d.size(); ++l) {
    const double bound = std::sqrt(1.0 / double(d[l]));
    const std::size_t n = std::size_t(d[l]) * d[l + 1] + (spec.bias ? d[l + 1] : 0);
    for (std::size_t i = 0; i < n; ++i) net.params[off + i] = rng.uniform(-bound, bound);
    off += n;
  }
  return net;
}

// single-sample double-precision forward
inline void mlpEval(const Mlp& net, const double* x, double* y) {
  const auto d = layerDims(net.spec);
  std::vector<double> cur(x, x + d[0]), next;
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < d.size(); ++l) {
    const int in = d[l], out = d[l + 1];
    next.assign(out, 0.0);
    const double* W = net.params.data() + off;
    for (int i = 0; i < in; ++i) {
      const double xi = cur[i];
      if (xi == 0.0) continue;
      const double* w = W + std::size_t(i) * out;
      for (int j = 0; j < out; ++j) next[j] += xi * w[j];
    }
    off += std::size_t(in) * out;
    if (net.spec.bias) {
      for (int j = 0; j < out; ++j) next[j] += net.params[off + j];
      off += out;
    }
    if (l + 2 < d.size()) {
      if (net.spec.activation == Activation::Gelu)
        for (double& v : next) v = geluFn(v);
      else if (net.spec.activation == Activation::Relu)
        for (double& v : next) v = v > 0.0 ? v : 0.0;
    }
    cur.swap(next);
  }
  for (int j = 0; j < d.back(); ++j) y[j] = cur[j];
}

// Tape-side weights of one network. Bind once per tape, apply any number of
// times (recurrent rollouts reuse the same leaves so gradients accumulate).
struct MlpBinding {
  MlpSpec spec;
  std::vector<int> leaves;  // weight leaf per layer, bias leaf following it
};

inline MlpBinding bindMlp(Tape& tape, const Mlp& net) {
  MlpBinding b;
  b.spec = net.spec;
  const auto d = layerDims(net.spec);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < d.size(); ++l) {
    Array W(d[l], d[l + 1]);
    for (std::size_t i = 0; i < W.size(); ++i) W.data[i] = net.params[off + i];
    off += W.size();
    b.leaves.push_back(tape.leaf(std::move(W)));
    if (net.spec.bias) {
      Array bias(1, d[l + 1]);
      for (int j = 0; j < d[l + 1]; ++j) bias.data[j] = net.params[off + j];
      off += d[l + 1];
      b.leaves.push_back(tape.leaf(std::move(bias)));
    }
  }
  return b;
}

inline int mlpApply(Tape& tape, const MlpBinding& b, int x) {
  const auto d = layerDims(b.spec);
  int cur = x;
  std::size_t leaf = 0;
  for (std::size_t l = 0; l + 1 < d.size(); ++l) {
    cur = tape.matmul(cur, b.leaves[leaf++]);
    if (b.spec.bias) cur = tape.addRow(cur, b.leaves[leaf++]);
    if (l + 2 < d.size()) {
      if (b.spec.activation == Activation::Gelu)
        cur = tape.gelu(cur);
      else if (b.spec.activation == Activation::Relu)
        cur = tape.relu(cur);
    }
  }
  return cur;
}

// flatten leaf gradients back into parameter order, accumulating into grads
inline void mlpAccumulateGrads(const Tape& tape, const MlpBinding& b, std::vector<double>& grads) {
  std::size_t off = grads.size();
  grads.resize(off + paramCount(b.spec), 0.0);
  for (int leaf : b.leaves) {
    const Array& g = tape.grad(leaf);
    const std::size_t n = tape.val(leaf).size();
    if (!g.data.empty())
      for (std::size_t i = 0; i < n; ++i) grads[off + i] += g.data[i];
    off += n;
  }
}

}  // namespace mocu

#endif
