#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <cmath>

#include "mocu/rng.hpp"
#include "mocu/surrogates.hpp"

using namespace mocu;

namespace {
std::string tmp(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}


double relErr(double got, double want) {
  return std::abs(got - want) / std::max(1.0, std::abs(want));
}

Mlp zeroMlp(const MlpSpec& spec) { return Mlp{spec, std::vector<double>(paramCount(spec), 0.0)}; }

std::array<double, 12> randomState(Rng& rng, double posScale = 0.4, double velScale = 0.5) {
  std::array<double, 12> x{};
  for (int i = 0; i < 6; ++i) {
    x[i] = rng.uniform(-posScale, posScale);
    x[6 + i] = rng.uniform(-velScale, velScale);
  }
  return x;
}

std::array<double, 6> randomInput(Rng& rng, double scale = 0.8) {
  std::array<double, 6> u{};
  for (auto& v : u) v = rng.uniform(-scale, scale);
  return u;
}

// smooth bounded excitation integrated through the exact plant
Trajectory makeTrajectory(const RobotSpec& spec, std::uint64_t seed, int steps) {
  Rng rng(seed, 11);
  std::array<double, 6> amp, w, phase;
  for (int i = 0; i < 6; ++i) {
    amp[i] = rng.uniform(0.1, 0.5);
    w[i] = rng.uniform(0.5, 2.0);
    phase[i] = rng.uniform(0.0, 6.28);
  }
  std::vector<std::array<double, 6>> U(steps);
  for (int t = 0; t < steps; ++t)
    for (int i = 0; i < 6; ++i) U[t][i] = amp[i] * std::sin(w[i] * t * 0.01 + phase[i]);
  JointState x0;
  for (int i = 0; i < 6; ++i) {
    x0.q[i] = rng.uniform(-0.3, 0.3);
    x0.qd[i] = rng.uniform(-0.2, 0.2);
  }
  return simulateOpenLoop(spec, x0, U, 0.01).traj;
}

}  // namespace

TEST_CASE("additive state model: zero networks and additivity") {
  StateModel m = makeStateModel(StateKind::Nssm, 3);
  Rng rng(1, 0);
  const auto x = randomState(rng);
  const auto u = randomInput(rng);

  StateModel zeroed = m;
  zeroed.f1 = zeroMlp(m.f1.spec);
  zeroed.f2 = zeroMlp(m.f2.spec);
  for (double v : stateStep(zeroed, x, u)) REQUIRE(v == 0.0);

  StateModel onlyF1 = m, onlyF2 = m;
  onlyF1.f2 = zeroMlp(m.f2.spec);
  onlyF2.f1 = zeroMlp(m.f1.spec);
  const auto full = stateStep(m, x, u);
  const auto a = stateStep(onlyF1, x, u);
  const auto b = stateStep(onlyF2, x, u);
  for (int i = 0; i < 12; ++i) REQUIRE(full[i] == Catch::Approx(a[i] + b[i]).margin(1e-14));
}

TEST_CASE("neural-ODE state model: zero field, exact linear field") {
  StateModel m = makeStateModel(StateKind::Node1, 4);
  m.f1 = zeroMlp(m.f1.spec);
  Rng rng(2, 0);
  const auto x = randomState(rng);
  const auto u = randomInput(rng);
  REQUIRE(stateStep(m, x, u) == x);

  // identity-activation field computing the true derivative [qd, u]:
  // integration then reproduces the double integrator exactly, because the
  // solution is polynomial in t
  StateModel lin;
  lin.kind = StateKind::Node1;
  const MlpSpec fs{19, 12, 1, 64, Activation::Identity, false};
  lin.f1 = zeroMlp(fs);
  for (int j = 0; j < 6; ++j) {
    lin.f1.params[std::size_t(6 + j) * 64 + j] = 1.0;        // hidden j = qd_j
    lin.f1.params[std::size_t(12 + j) * 64 + 6 + j] = 1.0;   // hidden 6+j = u_j
  }
  for (int i = 0; i < 12; ++i) lin.f1.params[19 * 64 + std::size_t(i) * 12 + i] = 1.0;
  const auto next = stateStep(lin, x, u);
  const double h = lin.dt;
  for (int i = 0; i < 6; ++i) {
    REQUIRE(next[i] == Catch::Approx(x[i] + h * x[6 + i] + 0.5 * h * h * u[i]).margin(1e-12));
    REQUIRE(next[6 + i] == Catch::Approx(x[6 + i] + h * u[i]).margin(1e-12));
  }
}

TEST_CASE("exact-integrator state model equals the Euler step bit for bit") {
  const StateModel m = makeStateModel(StateKind::Node2, 0);
  Rng rng(3, 0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = randomState(rng, 2.0, 1.5);
    const auto u = randomInput(rng, 2.0);
    REQUIRE(stateStep(m, x, u) == stateToRow(integrateState(rowToState(x), u, 0.01)));
  }
  const std::array<double, 12> rest{};
  REQUIRE(stateStep(m, rest, std::array<double, 6>{}) == rest);
}

TEST_CASE("state loss: exact model vanishes, zero model matches hand value") {
  const RobotSpec spec = kr500Spec();
  const Trajectory tr = makeTrajectory(spec, 5, 16);
  const auto chunks = segmentTrajectories({tr}, 8);
  REQUIRE(chunks.size() == 2);
  REQUIRE(stateLoss(makeStateModel(StateKind::Node2, 0), chunks, 8) == 0.0);

  // zero-network additive model predicts 0 everywhere
  StateModel zero = makeStateModel(StateKind::Nssm, 1);
  zero.f1 = zeroMlp(zero.f1.spec);
  zero.f2 = zeroMlp(zero.f2.spec);
  Trajectory two;
  two.U = {tr.U[0], tr.U[1]};
  two.X = {tr.X[0], tr.X[1], tr.X[2]};
  two.Y = {tr.Y[0], tr.Y[1]};
  double hand = 0.0;
  for (int t = 1; t <= 2; ++t)
    for (int i = 0; i < 12; ++i) hand += two.X[t][i] * two.X[t][i];
  REQUIRE(stateLoss(zero, {two}, 2) == Catch::Approx(hand / 24.0).margin(1e-18));
}

TEST_CASE("additive output model: zero networks and additivity") {
  const RobotSpec spec = kr500Spec();
  OutputModel m = makeOutputModel(OutputKind::Nssm, 6);
  Rng rng(4, 0);
  const auto x = randomState(rng);
  const auto u = randomInput(rng);

  OutputModel zeroed = m;
  zeroed.f3 = zeroMlp(m.f3.spec);
  zeroed.f4 = zeroMlp(m.f4.spec);
  for (double v : outputStep(spec, zeroed, x, u)) REQUIRE(v == 0.0);

  OutputModel onlyF3 = m, onlyF4 = m;
  onlyF3.f4 = zeroMlp(m.f4.spec);
  onlyF4.f3 = zeroMlp(m.f3.spec);
  const auto full = outputStep(spec, m, x, u);
  const auto a = outputStep(spec, onlyF3, x, u);
  const auto b = outputStep(spec, onlyF4, x, u);
  for (int i = 0; i < 6; ++i) REQUIRE(full[i] == Catch::Approx(a[i] + b[i]).margin(1e-14));
}

TEST_CASE("latent output model: dimensions, zero decoder, manual recursion") {
  const RobotSpec spec = kr500Spec();
  OutputModel m = makeOutputModel(OutputKind::Latent, 7);
  REQUIRE(m.latentDim == 12);
  REQUIRE(m.f3.spec.outputDim == 12);
  REQUIRE(m.f4.spec.inputDim == 12);

  Rng rng(5, 0);
  const auto x = randomState(rng);
  const auto u = randomInput(rng);
  const std::array<double, 6> y0 = {0.1, -0.2, 0.3, 0.4, -0.5, 0.6};

  OutputModel zeroDec = m;
  zeroDec.f4 = zeroMlp(m.f4.spec);
  for (double v : outputStep(spec, zeroDec, x, u, &y0)) REQUIRE(v == 0.0);

  // two recursive steps equal the manual composition
  PlantSurrogate s{spec, makeStateModel(StateKind::Node2, 0), m};
  std::vector<std::array<double, 6>> U = {u, randomInput(rng)};
  const RolloutResult r = rollout(s, x, U, 2, &y0);
  REQUIRE(r.Y[0] == y0);
  const auto x1 = stateStep(s.state, x, U[0]);
  const auto manual = outputStep(spec, m, x1, U[1], &y0);
  REQUIRE(r.Y[1] == manual);

  REQUIRE_THROWS_AS(rollout(s, x, U, 2), std::invalid_argument);
  REQUIRE_THROWS_AS(outputStep(spec, m, x, u), std::invalid_argument);
}

TEST_CASE("mixed output model: zero networks give the static-gravity output") {
  const RobotSpec spec = kr500Spec();
  OutputModel m = makeOutputModel(OutputKind::Mixed, 8);
  m.f3 = zeroMlp(m.f3.spec);
  m.f4 = zeroMlp(m.f4.spec);
  m.f5 = zeroMlp(m.f5.spec);
  Rng rng(6, 0);
  auto x = randomState(rng);
  const auto u = randomInput(rng);
  std::array<double, 6> q, zero{};
  for (int i = 0; i < 6; ++i) q[i] = x[i];
  const auto y = outputStep(spec, m, x, u);
  const auto expect = plantOutput(spec, q, zero, zero).vec();
  for (int i = 0; i < 6; ++i) REQUIRE(y[i] == Catch::Approx(expect[i]).margin(1e-12));
}

TEST_CASE("mixed output model with analytic oracles equals the exact plant") {
  const RobotSpec spec = kr500Spec();
  OutputModel m = makeOutputModel(OutputKind::Mixed, 9);
  m.exactOracle = true;
  Rng rng(7, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = randomState(rng, 1.5, 1.2);
    const auto u = randomInput(rng, 1.5);
    std::array<double, 6> q, qd;
    for (int i = 0; i < 6; ++i) {
      q[i] = x[i];
      qd[i] = x[6 + i];
    }
    const auto y = outputStep(spec, m, x, u);
    const auto expect = plantOutput(spec, q, qd, u).vec();
    for (int i = 0; i < 6; ++i) REQUIRE(std::abs(y[i] - expect[i]) < 1e-10);
  }
}

TEST_CASE("oracle-substituted surrogate reproduces a 256-step simulation") {
  const RobotSpec spec = kr500Spec();
  const Trajectory tr = makeTrajectory(spec, 42, 256);
  PlantSurrogate s{spec, makeStateModel(StateKind::Node2, 0), makeOutputModel(OutputKind::Mixed, 10)};
  s.output.exactOracle = true;
  const RolloutResult r = rollout(s, tr.X[0], tr.U, 256);
  for (int t = 0; t <= 256; ++t) REQUIRE(r.X[t] == tr.X[t]);  // Euler is shared exactly
  for (int t = 0; t < 256; ++t)
    for (int i = 0; i < 6; ++i) REQUIRE(std::abs(r.Y[t][i] - tr.Y[t][i]) < 1e-8);
}

TEST_CASE("output loss: oracle-substituted mixed model vanishes, zero additive matches hand value") {
  const RobotSpec spec = kr500Spec();
  const Trajectory tr = makeTrajectory(spec, 11, 16);
  const auto chunks = segmentTrajectories({tr}, 8);
  const StateModel frozen = makeStateModel(StateKind::Node2, 0);

  OutputModel oracle = makeOutputModel(OutputKind::Mixed, 12);
  oracle.exactOracle = true;
  REQUIRE(outputLoss(oracle, frozen, spec, chunks, 8) < 1e-16);

  OutputModel zero = makeOutputModel(OutputKind::Nssm, 13);
  zero.f3 = zeroMlp(zero.f3.spec);
  zero.f4 = zeroMlp(zero.f4.spec);
  double hand = 0.0;
  std::size_t n = 0;
  for (const auto& ch : chunks)
    for (int t = 0; t < 8; ++t)
      for (int i = 0; i < 6; ++i) {
        hand += ch.Y[t][i] * ch.Y[t][i];
        ++n;
      }
  REQUIRE(outputLoss(zero, frozen, spec, chunks, 8) == Catch::Approx(hand / double(n)).margin(1e-18));
}

TEST_CASE("rollout causality: future inputs cannot affect earlier predictions") {
  const RobotSpec spec = kr500Spec();
  const Trajectory tr = makeTrajectory(spec, 13, 32);
  for (StateKind sk : {StateKind::Nssm, StateKind::Node1, StateKind::Node2}) {
    PlantSurrogate s{spec, makeStateModel(sk, 20), makeOutputModel(OutputKind::Nssm, 21)};
    auto U2 = tr.U;
    for (int t = 16; t < 32; ++t)
      for (int i = 0; i < 6; ++i) U2[t][i] += 1.0;
    const RolloutResult a = rollout(s, tr.X[0], tr.U, 32);
    const RolloutResult b = rollout(s, tr.X[0], U2, 32);
    for (int t = 0; t <= 16; ++t) REQUIRE(a.X[t] == b.X[t]);
    for (int t = 0; t < 16; ++t) REQUIRE(a.Y[t] == b.Y[t]);
    // shorter rollout is a strict prefix
    const RolloutResult c = rollout(s, tr.X[0], tr.U, 16);
    for (int t = 0; t <= 16; ++t) REQUIRE(a.X[t] == c.X[t]);
    for (int t = 0; t < 16; ++t) REQUIRE(a.Y[t] == c.Y[t]);
  }
}

TEST_CASE("tape and double paths agree for every model kind") {
  const RobotSpec spec = kr500Spec();
  Rng rng(8, 0);
  const int B = 3;
  std::vector<std::array<double, 12>> xs;
  std::vector<std::array<double, 6>> us, ys;
  for (int r = 0; r < B; ++r) {
    xs.push_back(randomState(rng));
    us.push_back(randomInput(rng));
    ys.push_back(randomInput(rng, 0.5));
  }
  Array xa(B, 12), ua(B, 6), ya(B, 6);
  for (int r = 0; r < B; ++r) {
    for (int i = 0; i < 12; ++i) xa.at(r, i) = xs[r][i];
    for (int i = 0; i < 6; ++i) {
      ua.at(r, i) = us[r][i];
      ya.at(r, i) = ys[r][i];
    }
  }

  for (StateKind sk : {StateKind::Nssm, StateKind::Node1, StateKind::Node2}) {
    const StateModel m = makeStateModel(sk, 31);
    Tape t;
    const StateBinding b = bindState(t, m);
    const int out = stateStepT(t, m, b, t.constant(xa), t.constant(ua));
    for (int r = 0; r < B; ++r) {
      const auto want = stateStep(m, xs[r], us[r]);
      for (int i = 0; i < 12; ++i)
        REQUIRE(t.val(out).at(r, i) == Catch::Approx(want[i]).margin(1e-13));
    }
  }

  for (OutputKind ok : {OutputKind::Nssm, OutputKind::Latent, OutputKind::Mixed}) {
    PlantSurrogate s{spec, makeStateModel(StateKind::Node2, 0), makeOutputModel(ok, 33)};
    Tape t;
    const OutputBinding b = bindOutput(t, s.output);
    const int yPrev = ok == OutputKind::Latent ? t.constant(ya) : -1;
    const int out = outputStepT(t, s, b, t.constant(xa), t.constant(ua), yPrev);
    for (int r = 0; r < B; ++r) {
      const auto want = outputStep(spec, s.output, xs[r], us[r], &ys[r]);
      for (int i = 0; i < 6; ++i)
        REQUIRE(t.val(out).at(r, i) == Catch::Approx(want[i]).margin(1e-12));
    }
  }
}

TEST_CASE("gradient through a chained neural-ODE rollout matches differences") {
  StateModel m = makeStateModel(StateKind::Node1, 55);
  Rng rng(9, 0);
  const auto x0 = randomState(rng);
  std::vector<std::array<double, 6>> U;
  for (int t = 0; t < 10; ++t) U.push_back(randomInput(rng));

  auto lossDouble = [&]() {
    std::array<double, 12> x = x0;
    for (int t = 0; t < 10; ++t) x = stateStep(m, x, U[t]);
    double s = 0.0;
    for (double v : x) s += v * v;
    return s / 12.0;
  };

  Tape t;
  const StateBinding b = bindState(t, m);
  Array xa(1, 12);
  for (int i = 0; i < 12; ++i) xa.data[i] = x0[i];
  int x = t.constant(std::move(xa));
  for (int step = 0; step < 10; ++step) {
    Array ua(1, 6);
    for (int i = 0; i < 6; ++i) ua.data[i] = U[step][i];
    x = stateStepT(t, m, b, x, t.constant(std::move(ua)));
  }
  const int loss = t.mse(x, -1);
  REQUIRE(t.val(loss).data[0] == Catch::Approx(lossDouble()).margin(1e-13));
  t.backward(loss);
  std::vector<double> analytic;
  mlpAccumulateGrads(t, b.f1, analytic);
  REQUIRE(analytic.size() == m.f1.params.size());

  for (std::size_t i = 0; i < m.f1.params.size(); i += 7) {  // sampled coordinates
    const double save = m.f1.params[i];
    const double h = 1e-6 * std::max(1.0, std::abs(save));
    m.f1.params[i] = save + h;
    const double lp = lossDouble();
    m.f1.params[i] = save - h;
    const double lm = lossDouble();
    m.f1.params[i] = save;
    REQUIRE(relErr((lp - lm) / (2.0 * h), analytic[i]) < 1e-5);
  }
}

TEST_CASE("short training runs reduce the loss of every trainable model") {
  const RobotSpec spec = kr500Spec();
  std::vector<Trajectory> train, val;
  for (int j = 0; j < 6; ++j) train.push_back(makeTrajectory(spec, 100 + j, 24));
  for (int j = 0; j < 2; ++j) val.push_back(makeTrajectory(spec, 200 + j, 24));

  TrainConfig cfg;
  cfg.curriculum = {8};
  cfg.maxEpochs = 40;
  cfg.batchSize = 8;
  cfg.lr = 0.01;
  cfg.seed = 5;

  SECTION("additive state model") {
    StateModel m = makeStateModel(StateKind::Nssm, 60);
    const double before = stateLoss(m, segmentTrajectories(val, 8), 8);
    const TrainReport rep = trainStateModel(m, train, val, cfg);
    REQUIRE(rep.bestVal < before);
    REQUIRE(rep.bestVal == Catch::Approx(stateLoss(m, segmentTrajectories(val, 8), 8)).margin(1e-12));
  }
  SECTION("neural-ODE state model") {
    StateModel m = makeStateModel(StateKind::Node1, 61);
    const double before = stateLoss(m, segmentTrajectories(val, 8), 8);
    const TrainReport rep = trainStateModel(m, train, val, cfg);
    REQUIRE(rep.bestVal < before);
  }
  SECTION("exact integrator needs no training") {
    StateModel m = makeStateModel(StateKind::Node2, 0);
    const TrainReport rep = trainStateModel(m, train, val, cfg);
    REQUIRE(rep.bestVal == 0.0);
    REQUIRE(rep.trainLoss.empty());
  }
  SECTION("output models on the frozen exact state model") {
    const StateModel frozen = makeStateModel(StateKind::Node2, 0);
    for (OutputKind ok : {OutputKind::Nssm, OutputKind::Latent, OutputKind::Mixed}) {
      OutputModel m = makeOutputModel(ok, 62);
      const double before = outputLoss(m, frozen, spec, segmentTrajectories(val, 8), 8);
      const TrainReport rep = trainOutputModel(m, frozen, spec, train, val, cfg);
      INFO(outputKindName(ok));
      REQUIRE(rep.bestVal < before);
    }
  }
}

TEST_CASE("surrogate checkpoints round-trip and reject mismatched architectures") {
  const RobotSpec spec = kr500Spec();
  const PlantSurrogate s = makeSurrogate(spec, StateKind::Nssm, OutputKind::Mixed, 77);
  Checkpoint c = surrogateCheckpoint(s, 77);
  saveCheckpoint(tmp("surrogate_roundtrip.txt"), c);
  const PlantSurrogate r = loadSurrogate(tmp("surrogate_roundtrip.txt"), spec);
  REQUIRE(r.state.kind == StateKind::Nssm);
  REQUIRE(r.output.kind == OutputKind::Mixed);
  REQUIRE(r.state.f1.params == s.state.f1.params);
  REQUIRE(r.state.f2.params == s.state.f2.params);
  REQUIRE(r.output.f5.params == s.output.f5.params);

  // a checkpoint whose manifest claims a different output kind must fail the
  // architecture check
  c.meta["output_kind"] = "latent";
  saveCheckpoint(tmp("surrogate_tampered.txt"), c);
  REQUIRE_THROWS(loadSurrogate(tmp("surrogate_tampered.txt"), spec));
}
