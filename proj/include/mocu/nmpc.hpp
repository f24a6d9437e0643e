#ifndef MOCU_NMPC_HPP
#define MOCU_NMPC_HPP

// Receding-horizon optimal control over the exact plant: direct single
// shooting with projected-gradient iterations and a backtracking line
// search. Control bounds are enforced exactly by projection onto the
// acceleration box; position and velocity bounds enter as smooth quadratic
// penalties in normalized units. Gradients come from the tape's plant-output
// node; line-search cost probes run in plain double arithmetic.

#include <array>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "mocu/kinematics.hpp"
#include "mocu/tape.hpp"

namespace mocu {

struct NmpcConfig {
  int horizon = 32;
  double dt = 0.01;
  std::array<double, 6> trackingWeight{1, 1, 1, 1, 1, 1};
  double effortWeight = 0.1;
  double washoutWeight = 1.0;
  double penaltyWeight = 1e3;  // quadratic penalty on normalized q/qd excess
  int maxIters = 40;
  double gradTol = 1e-6;  // infinity norm of the projected gradient
};

struct NmpcSolution {
  std::vector<std::array<double, 6>> U;   // horizon controls, inside the box
  std::vector<std::array<double, 12>> X;  // predicted states, horizon + 1
  std::vector<std::array<double, 6>> Y;   // predicted outputs
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
  double solveSeconds = 0.0;
};

namespace detail {

inline void clampBox(const RobotSpec& spec, std::vector<std::array<double, 6>>& U) {
  for (auto& u : U)
    for (int i = 0; i < 6; ++i) u[i] = std::min(spec.qddMax[i], std::max(-spec.qddMax[i], u[i]));
}

// normalized-excess penalty of one state, shared by both cost paths
inline double statePenalty(const RobotSpec& spec, const std::array<double, 12>& x) {
  double pen = 0.0;
  for (int i = 0; i < 6; ++i) {
    const double nq = std::abs(normalizedPosition(spec, i, x[i]));
    const double nqd = std::abs(x[6 + i] / spec.qdMax[i]);
    if (nq > 1.0) pen += (nq - 1.0) * (nq - 1.0);
    if (nqd > 1.0) pen += (nqd - 1.0) * (nqd - 1.0);
  }
  return pen / 6.0;
}

inline double nmpcCost(const RobotSpec& spec, const NmpcConfig& cfg,
                       const std::array<double, 12>& x0, const std::array<double, 6>& ref,
                       const std::vector<std::array<double, 6>>& U) {
  const int N = cfg.horizon;
  std::array<double, 12> x = x0;
  double cost = 0.0;
  for (int t = 0; t < N; ++t) {
    std::array<double, 6> q, qd;
    for (int i = 0; i < 6; ++i) {
      q[i] = x[i];
      qd[i] = x[6 + i];
    }
    const std::array<double, 6> y = plantOutputT<double>(spec, q, qd, U[t]);
    double track = 0.0, effort = 0.0;
    for (int i = 0; i < 6; ++i) {
      track += cfg.trackingWeight[i] * (y[i] - ref[i]) * (y[i] - ref[i]);
      effort += U[t][i] * U[t][i];
    }
    cost += track / 6.0 + cfg.effortWeight * effort / 6.0;
    x = stateToRow(integrateState(rowToState(x), U[t], cfg.dt));
    double wash = 0.0;
    for (int i = 0; i < 6; ++i) wash += x[i] * x[i];
    cost += cfg.washoutWeight * wash / 6.0;
    cost += cfg.penaltyWeight * statePenalty(spec, x);
  }
  return cost / N;
}

// one gradient evaluation through the tape; returns the cost as well
inline double nmpcGradient(const RobotSpec& spec, const NmpcConfig& cfg,
                           const std::array<double, 12>& x0, const std::array<double, 6>& ref,
                           const std::vector<std::array<double, 6>>& U,
                           std::vector<std::array<double, 6>>& grad) {
  const int N = cfg.horizon;
  Tape t;
  std::vector<int> uLeaves(N);

  Array x0a(1, 12);
  for (int i = 0; i < 12; ++i) x0a.data[i] = x0[i];
  int x = t.constant(std::move(x0a));

  Array refa(1, 6);
  for (int i = 0; i < 6; ++i) refa.data[i] = ref[i];
  const int refNode = t.constant(std::move(refa));

  // per-column weights via constant diagonal matrices
  Array wTrack(6, 6), dQ(6, 6);
  for (int i = 0; i < 6; ++i) {
    wTrack.at(i, i) = std::sqrt(cfg.trackingWeight[i]);
    dQ.at(i, i) = 2.0 / (spec.qUpper[i] - spec.qLower[i]);
  }
  const int wTrackNode = t.constant(std::move(wTrack));
  const int dQNode = t.constant(std::move(dQ));
  std::vector<double> qMid(6), qdInv(6);
  for (int i = 0; i < 6; ++i) {
    qMid[i] = (spec.qUpper[i] + spec.qLower[i]) / (spec.qUpper[i] - spec.qLower[i]);
    qdInv[i] = 1.0 / spec.qdMax[i];
  }
  Array dQd(6, 6);
  for (int i = 0; i < 6; ++i) dQd.at(i, i) = qdInv[i];
  const int dQdNode = t.constant(std::move(dQd));
  const std::vector<double> ones(6, 1.0);

  int cost = -1;
  auto accumulate = [&](int node) { cost = cost < 0 ? node : t.scalarAdd(cost, node); };
  for (int step = 0; step < N; ++step) {
    Array ua(1, 6);
    for (int i = 0; i < 6; ++i) ua.data[i] = U[step][i];
    const int u = t.leaf(std::move(ua));
    uLeaves[step] = u;

    const int y = t.plantOut(x, u, &spec);
    accumulate(t.mse(t.matmul(t.sub(y, refNode), wTrackNode), -1));
    accumulate(t.scalarScale(t.mse(u, -1), cfg.effortWeight));

    const int q = t.sliceCols(x, 0, 6);
    const int qd = t.sliceCols(x, 6, 12);
    x = t.concatCols({t.add(q, t.scale(qd, cfg.dt)), t.add(qd, t.scale(u, cfg.dt))});

    const int qNext = t.sliceCols(x, 0, 6);
    accumulate(t.scalarScale(t.mse(qNext, -1), cfg.washoutWeight));

    // penalty: relu on each side of the normalized band
    const int nq = t.subRowConst(t.matmul(qNext, dQNode), qMid);
    const int nqd = t.matmul(t.sliceCols(x, 6, 12), dQdNode);
    const int over = t.concatCols({t.relu(t.subRowConst(nq, ones)), t.relu(t.subRowConst(nqd, ones)),
                                   t.relu(t.rowConstMinus(std::vector<double>(6, -1.0), nq)),
                                   t.relu(t.rowConstMinus(std::vector<double>(6, -1.0), nqd))});
    // mse averages over 24 entries; rescale to the double path's sum/6
    accumulate(t.scalarScale(t.mse(over, -1), cfg.penaltyWeight * 4.0));
  }
  const int total = t.scalarScale(cost, 1.0 / N);
  t.backward(total);
  grad.assign(N, {});
  for (int step = 0; step < N; ++step) {
    const Array& g = t.grad(uLeaves[step]);
    if (!g.data.empty())
      for (int i = 0; i < 6; ++i) grad[step][i] = g.data[i];
  }
  return t.val(total).data[0];
}

}  // namespace detail

inline NmpcSolution nmpcSolve(const RobotSpec& spec, const NmpcConfig& cfg,
                              const std::array<double, 12>& x0, const std::array<double, 6>& ref,
                              const std::vector<std::array<double, 6>>* warmStart = nullptr) {
  if (cfg.horizon < 1) throw std::invalid_argument("nmpcSolve: horizon must be positive");
  const auto tic = std::chrono::steady_clock::now();
  const int N = cfg.horizon;

  NmpcSolution sol;
  sol.U.assign(N, {});
  if (warmStart) {
    if (warmStart->size() != std::size_t(N))
      throw std::invalid_argument("nmpcSolve: warm start length mismatch");
    sol.U = *warmStart;
  }
  detail::clampBox(spec, sol.U);

  sol.cost = detail::nmpcCost(spec, cfg, x0, ref, sol.U);
  std::vector<std::array<double, 6>> grad, trial;
  double step = 1.0;
  for (int iter = 0; iter < cfg.maxIters; ++iter) {
    sol.iterations = iter + 1;
    const double cost = detail::nmpcGradient(spec, cfg, x0, ref, sol.U, grad);
    sol.cost = cost;

    // projected-gradient stationarity measure
    double stat = 0.0;
    for (int t = 0; t < N; ++t)
      for (int i = 0; i < 6; ++i) {
        const double moved = std::min(spec.qddMax[i],
                                      std::max(-spec.qddMax[i], sol.U[t][i] - grad[t][i]));
        stat = std::max(stat, std::abs(moved - sol.U[t][i]));
      }
    if (stat < cfg.gradTol) {
      sol.converged = true;
      break;
    }

    bool accepted = false;
    double s = step * 1.5;
    for (int bt = 0; bt < 40; ++bt) {
      trial = sol.U;
      for (int t = 0; t < N; ++t)
        for (int i = 0; i < 6; ++i) trial[t][i] -= s * grad[t][i];
      detail::clampBox(spec, trial);
      double moved2 = 0.0;
      for (int t = 0; t < N; ++t)
        for (int i = 0; i < 6; ++i) {
          const double d = trial[t][i] - sol.U[t][i];
          moved2 += d * d;
        }
      if (moved2 == 0.0) break;  // projection absorbed the whole step
      const double trialCost = detail::nmpcCost(spec, cfg, x0, ref, trial);
      if (std::isfinite(trialCost) && trialCost <= cost - 1e-4 / s * moved2) {
        sol.U = trial;
        sol.cost = trialCost;
        step = s;
        accepted = true;
        break;
      }
      s *= 0.5;
    }
    if (!accepted) {
      sol.converged = true;  // no descent step exists at line-search resolution
      break;
    }
  }

  // predicted rollout under the solution
  sol.X.reserve(N + 1);
  sol.Y.reserve(N);
  std::array<double, 12> x = x0;
  for (int t = 0; t < N; ++t) {
    sol.X.push_back(x);
    std::array<double, 6> q, qd;
    for (int i = 0; i < 6; ++i) {
      q[i] = x[i];
      qd[i] = x[6 + i];
    }
    sol.Y.push_back(plantOutputT<double>(spec, q, qd, sol.U[t]));
    x = stateToRow(integrateState(rowToState(x), sol.U[t], cfg.dt));
  }
  sol.X.push_back(x);
  sol.solveSeconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - tic).count();
  return sol;
}

struct ClosedLoopResult {
  Trajectory traj;
  std::vector<double> solveSeconds;  // one entry per control step
  std::vector<int> iterations;
  int failures = 0;  // solves that produced a non-finite cost (zero control applied)
};

// Receding-horizon simulation: each step solves from the current state with
// the reference held constant over the horizon, applies the first control,
// and shifts the solution one step as the next warm start.
inline ClosedLoopResult nmpcClosedLoop(const RobotSpec& spec, const NmpcConfig& cfg,
                                       const std::array<double, 12>& x0,
                                       const std::vector<std::array<double, 6>>& refs) {
  ClosedLoopResult res;
  res.traj.dt = cfg.dt;
  std::array<double, 12> x = x0;
  std::vector<std::array<double, 6>> warm(cfg.horizon, std::array<double, 6>{});
  for (const auto& ref : refs) {
    const NmpcSolution sol = nmpcSolve(spec, cfg, x, ref, &warm);
    std::array<double, 6> u{};
    if (std::isfinite(sol.cost)) {
      u = sol.U[0];
      warm = sol.U;
      for (int t = 0; t + 1 < cfg.horizon; ++t) warm[t] = warm[t + 1];
    } else {
      ++res.failures;
      warm.assign(cfg.horizon, std::array<double, 6>{});
    }
    res.solveSeconds.push_back(sol.solveSeconds);
    res.iterations.push_back(sol.iterations);

    std::array<double, 6> q, qd;
    for (int i = 0; i < 6; ++i) {
      q[i] = x[i];
      qd[i] = x[6 + i];
    }
    res.traj.X.push_back(x);
    res.traj.U.push_back(u);
    res.traj.Y.push_back(plantOutputT<double>(spec, q, qd, u));
    x = stateToRow(integrateState(rowToState(x), u, cfg.dt));
  }
  res.traj.X.push_back(x);
  return res;
}

}  // namespace mocu

#endif
