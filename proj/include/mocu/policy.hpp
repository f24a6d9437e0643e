#ifndef MOCU_POLICY_HPP
#define MOCU_POLICY_HPP

// Bounded control policy. One MLP maps (current output, state, reference
// preview) to 6 joint accelerations plus a 12-entry prediction of the next
// state; a relu-form saturation pins all 18 outputs inside the robot's
// limits structurally, with unit gradients strictly inside the bounds. The
// policy trains by imitation: rolled out against a frozen plant surrogate
// over short horizons while matching recorded controller behaviour.

#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mocu/checkpoint.hpp"
#include "mocu/kinematics.hpp"
#include "mocu/mlp.hpp"
#include "mocu/optim.hpp"
#include "mocu/rng.hpp"
#include "mocu/surrogates.hpp"
#include "mocu/tape.hpp"

namespace mocu {

struct Policy {
  Mlp net;  // (6 + 12 + 6*preview) -> hidden -> 18
  std::array<double, 18> lb{}, ub{};
  int preview = 1;  // reference rows fed per step
};

inline Policy makePolicy(const RobotSpec& spec, std::uint64_t seed, int preview = 1,
                         int hiddenWidth = 128) {
  if (preview < 1) throw std::invalid_argument("makePolicy: preview must be positive");
  Policy p;
  p.preview = preview;
  MlpSpec ms;
  ms.inputDim = 18 + 6 * preview;
  ms.outputDim = 18;
  ms.hiddenLayers = 1;
  ms.hiddenWidth = hiddenWidth;
  ms.activation = Activation::Gelu;
  ms.bias = true;
  p.net = initMlp(ms, seed, 60);
  for (int i = 0; i < 6; ++i) {
    p.lb[i] = -spec.qddMax[i];
    p.ub[i] = spec.qddMax[i];
    p.lb[6 + i] = spec.qLower[i];
    p.ub[6 + i] = spec.qUpper[i];
    p.lb[12 + i] = -spec.qdMax[i];
    p.ub[12 + i] = spec.qdMax[i];
  }
  return p;
}

// Componentwise clamp. Algebraically this is hi - relu(hi - lo - relu(v - lo));
// the applied-action path computes the equivalent min/max form, which is an
// exact identity for interior values (the relu arrangement wobbles by an ulp
// through the double subtraction). The tape path keeps the relu chain, whose
// point is its subgradients: one strictly inside the band, zero outside.
inline double saturate(double v, double lo, double hi) {
  if (lo > hi) throw std::invalid_argument("saturate: lower bound above upper");
  return std::min(hi, std::max(lo, v));
}

template <std::size_t N>
inline std::array<double, N> saturate(const std::array<double, N>& v,
                                      const std::array<double, N>& lo,
                                      const std::array<double, N>& hi) {
  std::array<double, N> out;
  for (std::size_t i = 0; i < N; ++i) out[i] = saturate(v[i], lo[i], hi[i]);
  return out;
}

// same clamp on tape rows; lo/hi broadcast over the batch
inline int saturateT(Tape& t, int v, const std::array<double, 18>& lo,
                     const std::array<double, 18>& hi) {
  std::vector<double> lov(lo.begin(), lo.end()), hiv(hi.begin(), hi.end()), span(18);
  for (int i = 0; i < 18; ++i) {
    if (lo[i] > hi[i]) throw std::invalid_argument("saturateT: lower bound above upper");
    span[i] = hi[i] - lo[i];
  }
  const int inner = t.relu(t.subRowConst(v, lov));
  return t.rowConstMinus(hiv, t.relu(t.rowConstMinus(span, inner)));
}

struct PolicyAction {
  std::array<double, 6> u{};
  std::array<double, 12> xhat{};
};

inline PolicyAction policyForward(const Policy& p, const std::array<double, 6>& y,
                                  const std::array<double, 12>& x,
                                  const std::vector<std::array<double, 6>>& refPreview) {
  if (int(refPreview.size()) != p.preview)
    throw std::invalid_argument("policyForward: preview length mismatch");
  std::vector<double> in(18 + 6 * p.preview);
  for (int i = 0; i < 6; ++i) in[i] = y[i];
  for (int i = 0; i < 12; ++i) in[6 + i] = x[i];
  for (int r = 0; r < p.preview; ++r)
    for (int i = 0; i < 6; ++i) in[18 + 6 * r + i] = refPreview[r][i];
  std::array<double, 18> raw;
  mlpEval(p.net, in.data(), raw.data());
  const std::array<double, 18> sat = saturate(raw, p.lb, p.ub);
  PolicyAction act;
  for (int i = 0; i < 6; ++i) act.u[i] = sat[i];
  for (int i = 0; i < 12; ++i) act.xhat[i] = sat[6 + i];
  return act;
}

// ---------------------------------------------------------------------------
// closed loop against the frozen surrogate

struct TraceStep {
  std::array<double, 12> x{};      // surrogate state entering the step
  std::array<double, 6> yIn{};     // output fed to the policy
  std::array<double, 6> ref{};     // reference previewed (first row)
  std::array<double, 6> u{};       // saturated action
  std::array<double, 12> xhat{};   // policy's own next-state prediction
  std::array<double, 12> xNext{};  // frozen surrogate's next state
  std::array<double, 6> yOut{};    // surrogate output realized with u
};

struct ClosedLoopTrace {
  std::vector<TraceStep> steps;
};

// The policy and the surrogate alternate: the action taken at step t
// produces both the next state and the realized output, which is what the
// policy sees at step t+1. The surrogate only predicts; it is never updated.
inline ClosedLoopTrace closedLoopRollout(const Policy& p, const PlantSurrogate& s,
                                         const std::array<double, 12>& x0,
                                         const std::array<double, 6>& y0,
                                         const std::vector<std::array<double, 6>>& refs,
                                         int nc) {
  if (nc < 1) throw std::invalid_argument("closedLoopRollout: horizon must be positive");
  if (int(refs.size()) < nc + p.preview - 1)
    throw std::invalid_argument("closedLoopRollout: not enough reference rows");
  const bool latent = s.output.kind == OutputKind::Latent;
  ClosedLoopTrace tr;
  tr.steps.reserve(nc);
  std::array<double, 12> x = x0;
  std::array<double, 6> yFed = y0;
  for (int t = 0; t < nc; ++t) {
    std::vector<std::array<double, 6>> preview(refs.begin() + t, refs.begin() + t + p.preview);
    const PolicyAction act = policyForward(p, yFed, x, preview);
    TraceStep st;
    st.x = x;
    st.yIn = yFed;
    st.ref = refs[t];
    st.u = act.u;
    st.xhat = act.xhat;
    st.yOut = outputStep(s.robot, s.output, x, act.u, latent ? &yFed : nullptr);
    st.xNext = stateStep(s.state, x, act.u);
    for (double v : st.xNext)
      if (!std::isfinite(v))
        throw std::runtime_error("closedLoopRollout: non-finite state at step " +
                                 std::to_string(t));
    for (double v : st.yOut)
      if (!std::isfinite(v))
        throw std::runtime_error("closedLoopRollout: non-finite output at step " +
                                 std::to_string(t));
    tr.steps.push_back(st);
    x = st.xNext;
    yFed = st.yOut;
  }
  return tr;
}

// the same loop against the exact plant (evaluation); the policy's first
// observation is the zero-input output at x0
inline Trajectory policyPlantRollout(const RobotSpec& spec, const Policy& p,
                                     const std::array<double, 12>& x0,
                                     const std::vector<std::array<double, 6>>& refs,
                                     double dt = 0.01) {
  const int nc = int(refs.size()) - (p.preview - 1);
  if (nc < 1) throw std::invalid_argument("policyPlantRollout: not enough reference rows");
  Trajectory tr;
  tr.dt = dt;
  std::array<double, 12> x = x0;
  JointState s = rowToState(x);
  std::array<double, 6> yFed = plantOutputT<double>(spec, s.q, s.qd, std::array<double, 6>{});
  for (int t = 0; t < nc; ++t) {
    std::vector<std::array<double, 6>> preview(refs.begin() + t, refs.begin() + t + p.preview);
    const PolicyAction act = policyForward(p, yFed, x, preview);
    s = rowToState(x);
    const std::array<double, 6> y = plantOutputT<double>(spec, s.q, s.qd, act.u);
    tr.X.push_back(x);
    tr.U.push_back(act.u);
    tr.Y.push_back(y);
    x = stateToRow(integrateState(rowToState(x), act.u, dt));
    yFed = y;
  }
  tr.X.push_back(x);
  return tr;
}

// ---------------------------------------------------------------------------
// imitation loss

struct PolicyLossWeights {
  double tracking = 1.0;
  double statePrediction = 1.0;
  double controlEffort = 0.1;
  double washout = 1.0;
};

// per step: tracking of the previewed reference by the realized output, the
// policy's own next-state prediction against the surrogate's, control
// effort, and distance of the next joint position from home; each term is a
// component mean, the total a mean over steps
inline double policyLoss(const ClosedLoopTrace& tr, const PolicyLossWeights& w = {}) {
  double sum = 0.0;
  for (const TraceStep& st : tr.steps) {
    double track = 0.0, pred = 0.0, effort = 0.0, wash = 0.0;
    for (int i = 0; i < 6; ++i) {
      track += (st.yOut[i] - st.ref[i]) * (st.yOut[i] - st.ref[i]);
      effort += st.u[i] * st.u[i];
      wash += st.xNext[i] * st.xNext[i];
    }
    for (int i = 0; i < 12; ++i)
      pred += (st.xhat[i] - st.xNext[i]) * (st.xhat[i] - st.xNext[i]);
    sum += w.tracking * track / 6.0 + w.statePrediction * pred / 12.0 +
           w.controlEffort * effort / 6.0 + w.washout * wash / 6.0;
  }
  return tr.steps.empty() ? 0.0 : sum / double(tr.steps.size());
}

// mean imitation loss over recorded chunks: each chunk supplies the starting
// state, the seed output, and its recorded outputs as the reference
inline double policyDatasetLoss(const Policy& p, const PlantSurrogate& s,
                                const std::vector<Trajectory>& chunks, int nc,
                                const PolicyLossWeights& w = {}) {
  if (chunks.empty()) return 0.0;
  double sum = 0.0;
  for (const Trajectory& tr : chunks) {
    std::vector<std::array<double, 6>> refs(tr.Y.begin(), tr.Y.end());
    sum += policyLoss(closedLoopRollout(p, s, tr.X[0], tr.Y[0], refs, nc), w);
  }
  return sum / double(chunks.size());
}

// ---------------------------------------------------------------------------
// training

struct PolicyTrainConfig {
  int nc = 32;  // rollout horizon per sample
  int maxEpochs = 3000;
  int patience = 500;
  int plateauEpochs = 100;
  double lrFactor = 0.5;
  double lr = 0.001;
  double weightDecay = 0.01;
  int batchSize = 256;
  std::uint64_t seed = 1;
  bool verbose = false;
};

// Minibatches of recorded chunks are rolled through policy + frozen
// surrogate on the tape; only the policy parameters receive updates. The
// recorded outputs serve as the tracked reference (imitation of the
// controller that produced them).
inline TrainReport trainPolicy(Policy& p, const PlantSurrogate& s,
                               const std::vector<Trajectory>& trainChunks,
                               const std::vector<Trajectory>& valChunks,
                               const PolicyTrainConfig& cfg, const PolicyLossWeights& w = {}) {
  for (const auto* set : {&trainChunks, &valChunks})
    for (const Trajectory& tr : *set)
      if (int(tr.steps()) < cfg.nc + p.preview - 1)
        throw std::invalid_argument("trainPolicy: chunk shorter than the rollout horizon");
  if (trainChunks.empty()) throw std::invalid_argument("trainPolicy: no training chunks");

  TrainReport rep;
  const bool latent = s.output.kind == OutputKind::Latent;
  std::vector<Mlp*> nets{&p.net};
  std::vector<double> best = detail::gatherParams(nets);
  double bestVal = std::numeric_limits<double>::infinity();

  OptimizerState opt;
  opt.lr = cfg.lr;
  opt.weightDecay = cfg.weightDecay;
  ScheduleState sched;
  sched.patience = cfg.patience;
  sched.plateauEpochs = cfg.plateauEpochs;
  sched.factor = cfg.lrFactor;

  Rng rng(cfg.seed, 70);
  std::vector<std::size_t> order(trainChunks.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.maxEpochs; ++epoch) {
    detail::shuffle(order, rng);
    double epochLoss = 0.0;
    std::size_t seen = 0;
    for (std::size_t base = 0; base < order.size(); base += cfg.batchSize) {
      const int B = int(std::min<std::size_t>(cfg.batchSize, order.size() - base));
      Tape t;
      const MlpBinding pb = bindMlp(t, p.net);
      const StateBinding sb = bindState(t, s.state);
      const OutputBinding ob = bindOutput(t, s.output);

      Array x0(B, 12), y0(B, 6);
      for (int r = 0; r < B; ++r) {
        const Trajectory& tr = trainChunks[order[base + r]];
        for (int i = 0; i < 12; ++i) x0.at(r, i) = tr.X[0][i];
        for (int i = 0; i < 6; ++i) y0.at(r, i) = tr.Y[0][i];
      }
      int x = t.constant(std::move(x0));
      int y = t.constant(std::move(y0));

      int lossSum = -1;
      auto accumulate = [&](int node, double weight) {
        const int scaled = t.scalarScale(node, weight);
        lossSum = lossSum < 0 ? scaled : t.scalarAdd(lossSum, scaled);
      };
      for (int step = 0; step < cfg.nc; ++step) {
        Array preview(B, 6 * p.preview), refCur(B, 6);
        for (int r = 0; r < B; ++r) {
          const Trajectory& tr = trainChunks[order[base + r]];
          for (int k = 0; k < p.preview; ++k)
            for (int i = 0; i < 6; ++i) preview.at(r, 6 * k + i) = tr.Y[step + k][i];
          for (int i = 0; i < 6; ++i) refCur.at(r, i) = tr.Y[step][i];
        }
        const int act = saturateT(
            t, mlpApply(t, pb, t.concatCols({y, x, t.constant(std::move(preview))})), p.lb,
            p.ub);
        const int u = t.sliceCols(act, 0, 6);
        const int xhat = t.sliceCols(act, 6, 18);
        const int yOut = outputStepT(t, s, ob, x, u, latent ? y : -1);
        const int xNext = stateStepT(t, s.state, sb, x, u);

        accumulate(t.mse(yOut, t.constant(std::move(refCur))), w.tracking);
        accumulate(t.mse(xhat, xNext), w.statePrediction);
        accumulate(t.mse(u, -1), w.controlEffort);
        accumulate(t.mse(t.sliceCols(xNext, 0, 6), -1), w.washout);
        x = xNext;
        y = yOut;
      }
      const int loss = t.scalarScale(lossSum, 1.0 / cfg.nc);
      const double lv = t.val(loss).data[0];
      t.backward(loss);
      const std::vector<const MlpBinding*> bs{&pb};  // surrogate stays frozen
      if (detail::applyGrads(t, lv, bs, nets, opt)) {
        epochLoss += lv * B;
        seen += B;
      } else {
        ++rep.skippedBatches;
      }
    }
    const double trainLoss = seen ? epochLoss / double(seen) : 0.0;
    const double valLoss = policyDatasetLoss(p, s, valChunks, cfg.nc, w);
    if (!std::isfinite(valLoss))
      throw std::runtime_error("trainPolicy: non-finite validation loss at epoch " +
                               std::to_string(epoch));
    rep.trainLoss.push_back(trainLoss);
    rep.valLoss.push_back(valLoss);
    if (valLoss < bestVal) {
      bestVal = valLoss;
      best = detail::gatherParams(nets);
    }
    if (cfg.verbose && epoch % 10 == 0)
      std::fprintf(stderr, "[policy] epoch %d train %.3e val %.3e lr %.4g\n", epoch, trainLoss,
                   valLoss, opt.lr);
    if (schedulerUpdate(sched, opt, trainLoss, valLoss).stop) break;
  }
  detail::scatterParams(best, nets);
  rep.bestVal = bestVal;
  return rep;
}

// ---------------------------------------------------------------------------
// persistence

inline Checkpoint policyCheckpoint(const Policy& p, std::uint64_t seed) {
  Checkpoint c;
  c.kind = "policy";
  c.seed = seed;
  c.meta["preview"] = std::to_string(p.preview);
  auto join = [](const std::array<double, 18>& v) {
    std::string s;
    for (int i = 0; i < 18; ++i) {
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", v[i]);
      s += (i ? "," : "") + std::string(buf);
    }
    return s;
  };
  c.meta["lb"] = join(p.lb);
  c.meta["ub"] = join(p.ub);
  c.nets.emplace_back("pi", p.net);
  return c;
}

inline Policy loadPolicy(const std::string& path, const RobotSpec& spec) {
  const Checkpoint c = loadCheckpoint(path);
  requireKind(c, "policy", path);
  const int preview = std::stoi(c.meta.at("preview"));
  Policy proto = makePolicy(spec, 0, preview);
  Policy p;
  p.preview = preview;
  p.lb = proto.lb;
  p.ub = proto.ub;
  p.net = requireNet(c, "pi", proto.net.spec, path);
  auto parse = [&](const std::string& joined) {
    std::array<double, 18> v{};
    std::istringstream ss(joined);
    std::string tok;
    for (int i = 0; i < 18; ++i) {
      if (!std::getline(ss, tok, ',')) throw std::runtime_error("loadPolicy: short bounds list");
      v[i] = std::strtod(tok.c_str(), nullptr);
    }
    return v;
  };
  const std::array<double, 18> lb = parse(c.meta.at("lb"));
  const std::array<double, 18> ub = parse(c.meta.at("ub"));
  for (int i = 0; i < 18; ++i)
    if (lb[i] != p.lb[i] || ub[i] != p.ub[i])
      throw std::runtime_error("loadPolicy: stored bounds do not match the robot in " + path);
  return p;
}

}  // namespace mocu

#endif
