#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "mocu/metrics.hpp"
#include "mocu/nmpc.hpp"
#include "mocu/rng.hpp"

using namespace mocu;

namespace {

// dense 6x6 solve by Gaussian elimination with partial pivoting
std::array<double, 6> solve6(std::array<std::array<double, 6>, 6> A, std::array<double, 6> b) {
  for (int c = 0; c < 6; ++c) {
    int piv = c;
    for (int r = c + 1; r < 6; ++r)
      if (std::abs(A[r][c]) > std::abs(A[piv][c])) piv = r;
    std::swap(A[c], A[piv]);
    std::swap(b[c], b[piv]);
    for (int r = c + 1; r < 6; ++r) {
      const double f = A[r][c] / A[c][c];
      for (int k = c; k < 6; ++k) A[r][k] -= f * A[c][k];
      b[r] -= f * b[c];
    }
  }
  std::array<double, 6> x{};
  for (int c = 5; c >= 0; --c) {
    double s = b[c];
    for (int k = c + 1; k < 6; ++k) s -= A[c][k] * x[k];
    x[c] = s / A[c][c];
  }
  return x;
}

std::array<double, 6> outputAt(const RobotSpec& spec, const std::array<double, 12>& x,
                               const std::array<double, 6>& u) {
  std::array<double, 6> q, qd;
  for (int i = 0; i < 6; ++i) {
    q[i] = x[i];
    qd[i] = x[6 + i];
  }
  return plantOutputT<double>(spec, q, qd, u);
}

}  // namespace

TEST_CASE("resting reference at the home pose is a fixed point") {
  const RobotSpec spec = kr500Spec();
  NmpcConfig cfg;
  cfg.horizon = 16;
  const std::array<double, 12> x0{};
  const NmpcSolution sol = nmpcSolve(spec, cfg, x0, restOutput(spec));
  REQUIRE(sol.converged);
  REQUIRE(sol.iterations == 1);
  REQUIRE(sol.cost == 0.0);
  for (const auto& u : sol.U)
    for (double v : u) REQUIRE(v == 0.0);
  for (const auto& x : sol.X)
    for (double v : x) REQUIRE(v == 0.0);
}

TEST_CASE("gradient of the shooting cost matches finite differences") {
  const RobotSpec spec = kr500Spec();
  NmpcConfig cfg;
  cfg.horizon = 4;
  Rng rng(17, 0);
  std::array<double, 12> x0{};
  for (int i = 0; i < 6; ++i) {
    x0[i] = rng.uniform(-0.3, 0.3);
    x0[6 + i] = rng.uniform(-0.3, 0.3);
  }
  std::array<double, 6> ref = restOutput(spec);
  ref[0] += 0.2;
  ref[3] += 1.0;
  std::vector<std::array<double, 6>> U(cfg.horizon);
  for (auto& u : U)
    for (double& v : u) v = rng.uniform(-0.4, 0.4);

  std::vector<std::array<double, 6>> grad;
  const double c0 = detail::nmpcGradient(spec, cfg, x0, ref, U, grad);
  REQUIRE(c0 == Catch::Approx(detail::nmpcCost(spec, cfg, x0, ref, U)).margin(1e-12));
  for (int t = 0; t < cfg.horizon; ++t)
    for (int i = 0; i < 6; ++i) {
      const double save = U[t][i];
      const double h = 1e-6;
      U[t][i] = save + h;
      const double cp = detail::nmpcCost(spec, cfg, x0, ref, U);
      U[t][i] = save - h;
      const double cm = detail::nmpcCost(spec, cfg, x0, ref, U);
      U[t][i] = save;
      const double fd = (cp - cm) / (2.0 * h);
      REQUIRE(std::abs(fd - grad[t][i]) / std::max(1.0, std::abs(fd)) < 1e-5);
    }
}

TEST_CASE("single-step solve matches the closed-form least-squares oracle") {
  const RobotSpec spec = kr500Spec();
  NmpcConfig cfg;
  cfg.horizon = 1;
  cfg.maxIters = 3000;
  cfg.gradTol = 1e-11;
  Rng rng(21, 0);
  std::array<double, 12> x0{};
  for (int i = 0; i < 6; ++i) {
    x0[i] = rng.uniform(-0.2, 0.2);
    x0[6 + i] = rng.uniform(-0.2, 0.2);
  }
  // a reference reachable with controls well inside the box keeps every
  // constraint inactive, so the optimum solves the regularized normal
  // equations of the affine output map
  std::array<double, 6> uSmall;
  for (double& v : uSmall) v = rng.uniform(-0.2, 0.2);
  const std::array<double, 6> ref = outputAt(spec, x0, uSmall);

  const std::array<double, 6> y0 = outputAt(spec, x0, std::array<double, 6>{});
  std::array<std::array<double, 6>, 6> B{};  // column j: dy/du_j (exact: y is affine in u)
  for (int j = 0; j < 6; ++j) {
    std::array<double, 6> up{}, um{};
    up[j] = 0.5;
    um[j] = -0.5;
    const auto yp = outputAt(spec, x0, up);
    const auto ym = outputAt(spec, x0, um);
    for (int i = 0; i < 6; ++i) B[i][j] = yp[i] - ym[i];
  }
  std::array<std::array<double, 6>, 6> A{};
  std::array<double, 6> rhs{};
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j)
      for (int k = 0; k < 6; ++k) A[i][j] += B[k][i] * cfg.trackingWeight[k] * B[k][j];
  for (int i = 0; i < 6; ++i) A[i][i] += cfg.effortWeight;
  for (int i = 0; i < 6; ++i)
    for (int k = 0; k < 6; ++k) rhs[i] += B[k][i] * cfg.trackingWeight[k] * (ref[k] - y0[k]);
  const std::array<double, 6> oracle = solve6(A, rhs);

  const NmpcSolution sol = nmpcSolve(spec, cfg, x0, ref);
  for (int i = 0; i < 6; ++i) {
    REQUIRE(std::abs(oracle[i]) < spec.qddMax[i]);  // box truly inactive
    REQUIRE(std::abs(sol.U[0][i] - oracle[i]) < 1e-6);
  }
}

TEST_CASE("infeasible reference saturates controls exactly at the box") {
  const RobotSpec spec = kr500Spec();
  NmpcConfig cfg;
  cfg.horizon = 4;
  cfg.maxIters = 150;
  std::array<double, 6> uBig;
  for (int i = 0; i < 6; ++i) uBig[i] = 4.0 * spec.qddMax[i];
  const std::array<double, 12> x0{};
  const std::array<double, 6> ref = outputAt(spec, x0, uBig);
  const NmpcSolution sol = nmpcSolve(spec, cfg, x0, ref);

  int binding = -1, bindingStep = -1;
  for (int t = 0; t < cfg.horizon; ++t)
    for (int i = 0; i < 6; ++i) {
      REQUIRE(std::abs(sol.U[t][i]) <= spec.qddMax[i]);
      if (std::abs(sol.U[t][i]) == spec.qddMax[i] && binding < 0) {
        binding = i;
        bindingStep = t;
      }
    }
  REQUIRE(binding >= 0);

  // 1-D slice oracle: with every other control frozen, a grid search over
  // the binding coordinate puts the minimum at the same bound
  std::vector<std::array<double, 6>> U = sol.U;
  const double lim = spec.qddMax[binding];
  double bestV = 0.0, bestC = std::numeric_limits<double>::infinity();
  for (int g = 0; g <= 400; ++g) {
    const double v = -lim + 2.0 * lim * double(g) / 400.0;
    U[bindingStep][binding] = v;
    const double c = detail::nmpcCost(spec, cfg, x0, ref, U);
    if (c < bestC) {
      bestC = c;
      bestV = v;
    }
  }
  REQUIRE(std::abs(bestV - sol.U[bindingStep][binding]) <= 2.0 * lim / 400.0 + 1e-12);
}

TEST_CASE("iteration cap sweep shows monotone cost decrease") {
  const RobotSpec spec = kr500Spec();
  Rng rng(31, 0);
  std::array<double, 12> x0{};
  for (int i = 0; i < 6; ++i) x0[i] = rng.uniform(-0.3, 0.3);
  std::array<double, 6> ref = restOutput(spec);
  ref[1] += 0.3;
  ref[4] += 1.5;

  double last = std::numeric_limits<double>::infinity();
  for (int cap = 1; cap <= 9; cap += 2) {
    NmpcConfig cfg;
    cfg.horizon = 8;
    cfg.maxIters = cap;
    const double c = nmpcSolve(spec, cfg, x0, ref).cost;
    REQUIRE(c <= last + 1e-15);
    last = c;
  }
}

TEST_CASE("closed loop at rest stays exactly at rest") {
  const RobotSpec spec = kr500Spec();
  NmpcConfig cfg;
  cfg.horizon = 8;
  const std::vector<std::array<double, 6>> refs(30, restOutput(spec));
  const ClosedLoopResult res = nmpcClosedLoop(spec, cfg, std::array<double, 12>{}, refs);
  REQUIRE(res.failures == 0);
  REQUIRE(res.traj.steps() == 30);
  for (const auto& u : res.traj.U)
    for (double v : u) REQUIRE(v == 0.0);
  for (const auto& x : res.traj.X)
    for (double v : x) REQUIRE(v == 0.0);
  REQUIRE(res.solveSeconds.size() == 30);
  for (double s : res.solveSeconds) REQUIRE(s > 0.0);
}

TEST_CASE("closed loop tracks a moving reference within normalized limits") {
  const RobotSpec spec = kr500Spec();
  NmpcConfig cfg;
  cfg.horizon = 16;
  cfg.maxIters = 25;
  cfg.gradTol = 1e-4;
  const auto rest = restOutput(spec);
  std::vector<std::array<double, 6>> refs(120);
  for (std::size_t t = 0; t < refs.size(); ++t) {
    refs[t] = rest;
    refs[t][3] += 2.0 * std::sin(2.0 * 3.14159 * 0.5 * double(t) * 0.01);
    refs[t][0] += 0.3 * std::sin(2.0 * 3.14159 * 0.8 * double(t) * 0.01);
  }
  const ClosedLoopResult res = nmpcClosedLoop(spec, cfg, std::array<double, 12>{}, refs);
  REQUIRE(res.failures == 0);

  const ComplianceReport rep = complianceReport(spec, res.traj);
  REQUIRE(rep.worstNormalized <= 1.0 + 1e-3);

  // the controller must actually move toward the reference: tracking beats
  // doing nothing
  double cost = 0.0, costIdle = 0.0;
  for (std::size_t t = 0; t < refs.size(); ++t)
    for (int k = 0; k < 6; ++k) {
      cost += (res.traj.Y[t][k] - refs[t][k]) * (res.traj.Y[t][k] - refs[t][k]);
      costIdle += (rest[k] - refs[t][k]) * (rest[k] - refs[t][k]);
    }
  REQUIRE(cost < 0.5 * costIdle);
}

TEST_CASE("warm starting does not increase the iteration count") {
  const RobotSpec spec = kr500Spec();
  NmpcConfig cfg;
  cfg.horizon = 8;
  cfg.maxIters = 60;
  cfg.gradTol = 1e-5;
  const auto rest = restOutput(spec);
  std::vector<std::array<double, 6>> refs(25);
  for (std::size_t t = 0; t < refs.size(); ++t) {
    refs[t] = rest;
    refs[t][4] += 1.0 * std::sin(0.05 * double(t));
    refs[t][5] += 0.5 * std::cos(0.08 * double(t));
  }

  const ClosedLoopResult warm = nmpcClosedLoop(spec, cfg, std::array<double, 12>{}, refs);

  // cold variant: fresh zero initialization at every step
  std::array<double, 12> x{};
  double coldIters = 0.0;
  for (const auto& ref : refs) {
    const NmpcSolution sol = nmpcSolve(spec, cfg, x, ref);
    coldIters += sol.iterations;
    x = stateToRow(integrateState(rowToState(x), sol.U[0], cfg.dt));
  }
  double warmIters = 0.0;
  for (int it : warm.iterations) warmIters += it;
  REQUIRE(warmIters <= coldIters);
}
