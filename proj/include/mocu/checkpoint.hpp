#ifndef MOCU_CHECKPOINT_HPP
#define MOCU_CHECKPOINT_HPP

// Versioned text checkpoints: a manifest (kind, seed, step count, free-form
// meta entries, per-net architecture descriptors) followed by flat parameter
// blocks at 17 significant digits. Loaders validate the manifest and reject
// anything that does not match what the caller expects.

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mocu/mlp.hpp"

namespace mocu {

struct Checkpoint {
  std::string kind;
  uint64_t seed = 0;
  long steps = 0;
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Mlp>> nets;

  const Mlp* find(const std::string& name) const {
    for (const auto& [n, net] : nets)
      if (n == name) return &net;
    return nullptr;
  }
};

inline std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void saveCheckpoint(const std::string& path, const Checkpoint& c) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("saveCheckpoint: cannot write " + path);
  out << "mocu-checkpoint v1\n";
  out << "kind " << c.kind << "\n";
  out << "seed " << c.seed << "\n";
  out << "steps " << c.steps << "\n";
  for (const auto& [k, v] : c.meta) out << "meta " << k << " " << v << "\n";
  for (const auto& [name, net] : c.nets) {
    out << "net " << name << " " << net.spec.inputDim << " " << net.spec.outputDim << " "
        << net.spec.hiddenLayers << " " << net.spec.hiddenWidth << " "
        << activationName(net.spec.activation) << " " << (net.spec.bias ? 1 : 0) << " "
        << net.params.size() << "\n";
    for (std::size_t i = 0; i < net.params.size(); ++i)
      out << fmt17(net.params[i]) << ((i + 1) % 8 == 0 ? "\n" : " ");
    if (net.params.size() % 8 != 0) out << "\n";
  }
  out << "end\n";
  if (!out) throw std::runtime_error("saveCheckpoint: write failure on " + path);
}

inline Checkpoint loadCheckpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("loadCheckpoint: cannot open " + path);
  std::string word;
  if (!(in >> word) || word != "mocu-checkpoint")
    throw std::runtime_error("loadCheckpoint: " + path + " is not a checkpoint file");
  if (!(in >> word) || word != "v1")
    throw std::runtime_error("loadCheckpoint: unsupported version in " + path);
  Checkpoint c;
  bool ended = false;
  while (in >> word) {
    if (word == "kind") {
      in >> c.kind;
    } else if (word == "seed") {
      in >> c.seed;
    } else if (word == "steps") {
      in >> c.steps;
    } else if (word == "meta") {
      std::string k;
      in >> k;
      std::string rest;
      std::getline(in, rest);
      const auto pos = rest.find_first_not_of(" \t");
      c.meta[k] = pos == std::string::npos ? "" : rest.substr(pos);
    } else if (word == "net") {
      std::string name, act;
      int inDim, outDim, hl, hw, bias;
      std::size_t n;
      if (!(in >> name >> inDim >> outDim >> hl >> hw >> act >> bias >> n))
        throw std::runtime_error("loadCheckpoint: malformed net header in " + path);
      Mlp net;
      net.spec = {inDim, outDim, hl, hw, activationFromName(act), bias != 0};
      if (n != paramCount(net.spec))
        throw std::runtime_error("loadCheckpoint: parameter count of net '" + name +
                                 "' disagrees with its architecture");
      net.params.resize(n);
      for (std::size_t i = 0; i < n; ++i)
        if (!(in >> net.params[i]))
          throw std::runtime_error("loadCheckpoint: truncated parameters for net '" + name + "'");
      c.nets.emplace_back(name, std::move(net));
    } else if (word == "end") {
      ended = true;
      break;
    } else {
      throw std::runtime_error("loadCheckpoint: unknown manifest entry '" + word + "'");
    }
  }
  if (!ended) throw std::runtime_error("loadCheckpoint: missing end marker in " + path);
  return c;
}

inline void requireKind(const Checkpoint& c, const std::string& kind, const std::string& path) {
  if (c.kind != kind)
    throw std::runtime_error(path + ": checkpoint kind '" + c.kind + "', expected '" + kind + "'");
}

inline Mlp requireNet(const Checkpoint& c, const std::string& name, const MlpSpec& expected,
                      const std::string& path) {
  const Mlp* net = c.find(name);
  if (!net) throw std::runtime_error(path + ": checkpoint lacks net '" + name + "'");
  if (!(net->spec == expected))
    throw std::runtime_error(path + ": net '" + name + "' architecture mismatch");
  return *net;
}

}  // namespace mocu

#endif
