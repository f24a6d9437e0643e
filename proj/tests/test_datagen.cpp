#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "mocu/datagen.hpp"
#include "mocu/metrics.hpp"

using namespace mocu;
namespace fs = std::filesystem;

namespace {

bool sameTrajectory(const Trajectory& a, const Trajectory& b) {
  if (a.U.size() != b.U.size() || a.X.size() != b.X.size() || a.Y.size() != b.Y.size())
    return false;
  for (std::size_t t = 0; t < a.U.size(); ++t)
    for (int i = 0; i < 6; ++i)
      if (a.U[t][i] != b.U[t][i] || a.Y[t][i] != b.Y[t][i]) return false;
  for (std::size_t t = 0; t < a.X.size(); ++t)
    for (int i = 0; i < 12; ++i)
      if (a.X[t][i] != b.X[t][i]) return false;
  return true;
}

fs::path freshDir(const char* name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("excitation signals target the requested joints within limits") {
  const RobotSpec spec = kr500Spec();
  for (SignalKind kind : kSignalKinds) {
    Rng rng(11, std::uint64_t(kind));
    const auto U = generateSignal(spec, kind, 1, 3, 600, 0.01, rng);
    REQUIRE(U.size() == 600);
    for (const auto& u : U)
      for (int j = 0; j < 6; ++j) {
        if (j < 1 || j > 3) REQUIRE(u[j] == 0.0);
        REQUIRE(std::abs(u[j]) <= spec.qddMax[j]);
      }
  }

  SECTION("same stream reproduces the profile exactly") {
    for (SignalKind kind : kSignalKinds) {
      Rng a(7, 3), b(7, 3);
      const auto ua = generateSignal(spec, kind, 0, 5, 400, 0.01, a);
      const auto ub = generateSignal(spec, kind, 0, 5, 400, 0.01, b);
      for (std::size_t t = 0; t < ua.size(); ++t)
        for (int j = 0; j < 6; ++j) REQUIRE(ua[t][j] == ub[t][j]);
    }
  }

  SECTION("bad arguments throw") {
    Rng rng(1, 0);
    REQUIRE_THROWS_AS(generateSignal(spec, SignalKind::Sine, 3, 2, 10, 0.01, rng),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(generateSignal(spec, SignalKind::Sine, 0, 6, 10, 0.01, rng),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(generateSignal(spec, SignalKind::Sine, 0, 0, 0, 0.01, rng),
                      std::invalid_argument);
  }
}

TEST_CASE("sine profiles peak exactly at their drawn amplitude") {
  const RobotSpec spec = kr500Spec();
  for (int j = 0; j < 6; ++j) {
    Rng rng(23, std::uint64_t(j));
    const auto U = generateSignal(spec, SignalKind::Sine, j, j, 2000, 0.01, rng);
    double peak = 0.0;
    for (const auto& u : U) peak = std::max(peak, std::abs(u[j]));
    REQUIRE(peak == U[0][j]);  // cosine starts at the peak sample
    REQUIRE(peak >= 0.2 * spec.qddMax[j]);
    REQUIRE(peak <= spec.qddMax[j]);
  }
}

TEST_CASE("step profiles hold piecewise-constant plateaus") {
  const RobotSpec spec = kr500Spec();
  Rng rng(5, 0);
  const auto U = generateSignal(spec, SignalKind::Step, 2, 2, 2000, 0.01, rng);
  int switches = 0;
  for (std::size_t t = 1; t < U.size(); ++t)
    if (U[t][2] != U[t - 1][2]) ++switches;
  REQUIRE(switches >= 5);        // 20 s of 0.5-3 s holds
  REQUIRE(switches <= 40);
  std::set<double> plateaus;
  for (const auto& u : U) plateaus.insert(u[2]);
  REQUIRE(plateaus.size() == std::size_t(switches + 1));
}

TEST_CASE("open-loop generation trims, segments, and stays compliant") {
  const RobotSpec spec = kr500Spec();
  OpenLoopParams p;
  p.duration = 4.0;
  p.repeats = 1;
  p.np = 64;
  const Dataset ds = openLoopDataset(spec, p, 99);

  REQUIRE(!ds.trajectories.empty());
  REQUIRE(ds.trajectories.size() <= 5 * 21 * std::size_t(400 / 64));
  REQUIRE(ds.np == 64);
  REQUIRE(ds.source == "openLoop");
  for (const Trajectory& tr : ds.trajectories) {
    REQUIRE(tr.steps() == 64);
    REQUIRE(tr.X.size() == 65);
    for (std::size_t t = 0; t < tr.X.size(); ++t) {
      const JointAccel* u = t < tr.U.size() ? &tr.U[t] : nullptr;
      REQUIRE(!checkLimits(spec, rowToState(tr.X[t]), u).any);
    }
  }

  SECTION("regeneration is bit-identical") {
    const Dataset again = openLoopDataset(spec, p, 99);
    REQUIRE(again.trajectories.size() == ds.trajectories.size());
    for (std::size_t i = 0; i < ds.trajectories.size(); ++i)
      REQUIRE(sameTrajectory(ds.trajectories[i], again.trajectories[i]));
  }

  SECTION("different seed changes the data") {
    const Dataset other = openLoopDataset(spec, p, 100);
    REQUIRE(!other.trajectories.empty());
    REQUIRE(!sameTrajectory(ds.trajectories[0], other.trajectories[0]));
  }
}

TEST_CASE("open-loop state samples cover the joint ranges") {
  const RobotSpec spec = kr500Spec();
  OpenLoopParams p;
  p.duration = 10.0;
  p.repeats = 2;
  p.np = 128;
  const Dataset ds = openLoopDataset(spec, p, 7);
  std::array<double, 6> lo, hi;
  lo.fill(1.0);
  hi.fill(-1.0);
  for (const Trajectory& tr : ds.trajectories)
    for (const auto& x : tr.X)
      for (int j = 0; j < 6; ++j) {
        const double nq = normalizedPosition(spec, j, x[j]);
        lo[j] = std::min(lo[j], nq);
        hi[j] = std::max(hi[j], nq);
      }
  for (int j = 0; j < 6; ++j) REQUIRE(hi[j] - lo[j] >= 1.2);  // 60% of [-1, 1]
}

TEST_CASE("stored records keep the pose family self-consistent") {
  // first and second pose derivatives recomputed from the record must match
  // finite differences of the recomputed pose along the same record
  const RobotSpec spec = kr500Spec();
  Rng rng(3, 1);
  JointState x0;
  for (int i = 0; i < 6; ++i) x0.q[i] = rng.uniform(-0.2, 0.2);
  Rng srng(3, 2);
  auto U = generateSignal(spec, SignalKind::Sine, 0, 5, 300, 0.01, srng);
  for (auto& u : U)
    for (double& v : u) v *= 0.1;  // gentle motion keeps the fd truncation error tiny
  const SimResult sim = simulateOpenLoop(spec, x0, U, 0.01);
  REQUIRE(sim.firstViolationIndex > U.size());

  // each record row carries (q, qd, u); its derivatives must match finite
  // differences along the local motion q(tau) = q + tau qd + tau^2 u / 2
  const Trajectory& tr = sim.traj;
  const double h = 1e-4;
  for (std::size_t t = 0; t < tr.steps(); t += 20) {
    const JointState s = rowToState(tr.X[t]);
    auto flow = [&](double tau) {
      std::array<double, 6> q, qd;
      for (int i = 0; i < 6; ++i) {
        q[i] = s.q[i] + tau * s.qd[i] + 0.5 * tau * tau * tr.U[t][i];
        qd[i] = s.qd[i] + tau * tr.U[t][i];
      }
      return poseDerivatives(spec, q, qd, tr.U[t]);
    };
    const PoseDerivatives prev = flow(-h), cur = flow(0.0), next = flow(h);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) {
        const double fdF = (next.F(r, c) - prev.F(r, c)) / (2.0 * h);
        REQUIRE(std::abs(fdF - cur.Fd(r, c)) < 1e-5);
        const double fdFd = (next.F(r, c) - 2.0 * cur.F(r, c) + prev.F(r, c)) / (h * h);
        REQUIRE(std::abs(fdFd - cur.Fdd(r, c)) < 1e-5);
      }
  }
}

TEST_CASE("synthetic references respect magnitude caps and determinism") {
  Rng a(41, 0), b(41, 0);
  const ReferenceScenario sa = synthReference(a, 20.0);
  const ReferenceScenario sb = synthReference(b, 20.0);
  REQUIRE(sa.channels.size() == 2000);
  for (std::size_t t = 0; t < sa.channels.size(); ++t)
    for (int c = 0; c < 6; ++c) {
      REQUIRE(sa.channels[t][c] == sb.channels[t][c]);
      REQUIRE(std::abs(sa.channels[t][c]) <= (c < 3 ? 0.5 : 5.0));
      REQUIRE(std::isfinite(sa.channels[t][c]));
    }

  SECTION("zero amplitude caps give the all-zero reference") {
    Rng r(41, 0);
    const ReferenceScenario z = synthReference(r, 5.0, 0.01, 0.0, 0.0);
    for (const auto& row : z.channels)
      for (double v : row) REQUIRE(v == 0.0);
  }

  SECTION("bad duration throws") {
    Rng r(1, 0);
    REQUIRE_THROWS_AS(synthReference(r, 0.0), std::invalid_argument);
  }
}

TEST_CASE("recorded references come from compliant plant motion") {
  const RobotSpec spec = kr500Spec();
  const std::array<double, 6> rest = restOutput(spec);

  Rng a(17, 0), b(17, 0);
  const ReferenceScenario sa = feasibleReference(spec, a, 8.0);
  const ReferenceScenario sb = feasibleReference(spec, b, 8.0);
  REQUIRE(sa.channels.size() == 800);
  for (std::size_t t = 0; t < sa.channels.size(); ++t)
    for (int c = 0; c < 6; ++c) {
      REQUIRE(sa.channels[t][c] == sb.channels[t][c]);
      REQUIRE(std::isfinite(sa.channels[t][c]));
    }

  // the recording begins motionless, so the angular-velocity deviations
  // start at exactly zero (acceleration channels start at the excitation)
  for (int c = 0; c < 3; ++c) REQUIRE(sa.channels[0][c] == 0.0);

  SECTION("different streams differ") {
    Rng c(17, 1);
    const ReferenceScenario sc = feasibleReference(spec, c, 8.0);
    bool differs = false;
    for (std::size_t t = 0; t < sc.channels.size() && !differs; ++t)
      for (int k = 0; k < 6; ++k)
        if (sc.channels[t][k] != sa.channels[t][k]) {
          differs = true;
          break;
        }
    REQUIRE(differs);
  }

  SECTION("the absolute reference is renderable: a tracking run stays compliant") {
    NmpcConfig nc;
    nc.horizon = 8;
    nc.maxIters = 15;
    nc.gradTol = 1e-4;
    std::vector<std::array<double, 6>> refs(sa.channels.begin(), sa.channels.begin() + 250);
    for (auto& r : refs)
      for (int k = 0; k < 6; ++k) r[k] += rest[k];
    const ClosedLoopResult run = nmpcClosedLoop(spec, nc, {}, refs);
    REQUIRE(run.failures == 0);
    const ComplianceReport rep = complianceReport(spec, run.traj);
    REQUIRE(rep.clean());
  }

  SECTION("bad duration throws") {
    Rng r(1, 0);
    REQUIRE_THROWS_AS(feasibleReference(spec, r, 0.0), std::invalid_argument);
  }
}

TEST_CASE("synthetic references are band-limited") {
  // Hann-windowed periodogram: energy above 5 Hz stays below 1% per channel
  Rng rng(59, 0);
  const ReferenceScenario sc = synthReference(rng, 20.0);
  const std::size_t n = sc.channels.size();
  for (int c = 0; c < 6; ++c) {
    std::vector<double> w(n);
    for (std::size_t t = 0; t < n; ++t) {
      const double hann =
          0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(t) / double(n - 1));
      w[t] = hann * sc.channels[t][c];
    }
    double total = 0.0, high = 0.0;
    for (std::size_t k = 0; k <= n / 2; ++k) {
      std::complex<double> X = 0.0;
      for (std::size_t t = 0; t < n; ++t)
        X += w[t] * std::exp(std::complex<double>(
                 0.0, -2.0 * std::numbers::pi * double(k) * double(t) / double(n)));
      const double e = std::norm(X) * (k == 0 || k == n / 2 ? 1.0 : 2.0);
      total += e;
      if (double(k) / (double(n) * sc.dt) > 5.0) high += e;
    }
    REQUIRE(high <= 0.01 * total);
  }
}

TEST_CASE("closed-loop generation windows controller runs") {
  const RobotSpec spec = kr500Spec();
  NmpcConfig cfg;
  cfg.horizon = 8;
  cfg.maxIters = 15;
  cfg.gradTol = 1e-4;
  Rng rng(13, 0);
  ReferenceScenario sc = synthReference(rng, 3.0, 0.01, 0.2, 1.0);
  int failures = -1;
  const Dataset ds = closedLoopDataset(spec, cfg, {sc}, 64, 13, &failures);
  REQUIRE(failures == 0);
  REQUIRE(ds.source == "closedLoop");
  REQUIRE(ds.trajectories.size() == 4);  // floor(300 / 64)
  for (const Trajectory& tr : ds.trajectories) {
    REQUIRE(tr.steps() == 64);
    for (std::size_t t = 0; t < tr.X.size(); ++t) {
      const JointAccel* u = t < tr.U.size() ? &tr.U[t] : nullptr;
      REQUIRE(!checkLimits(spec, rowToState(tr.X[t]), u).any);
    }
  }
}

TEST_CASE("splits shuffle deterministically and partition the set") {
  Dataset ds;
  ds.np = 4;
  for (int i = 0; i < 20; ++i) {
    Trajectory tr;
    tr.U.assign(4, JointAccel{double(i), 0, 0, 0, 0, 0});
    tr.X.assign(5, std::array<double, 12>{});
    tr.Y.assign(4, std::array<double, 6>{});
    ds.trajectories.push_back(tr);
  }
  SplitSpec sp;
  sp.shuffleSeed = 77;
  const DatasetSplit s = splitDataset(ds, sp);
  REQUIRE(s.train.trajectories.size() == 14);
  REQUIRE(s.val.trajectories.size() == 4);
  REQUIRE(s.test.trajectories.size() == 2);

  std::multiset<double> seen;
  for (const Dataset* part : {&s.train, &s.val, &s.test})
    for (const Trajectory& tr : part->trajectories) seen.insert(tr.U[0][0]);
  REQUIRE(seen.size() == 20);
  for (int i = 0; i < 20; ++i) REQUIRE(seen.count(double(i)) == 1);

  const DatasetSplit again = splitDataset(ds, sp);
  for (std::size_t i = 0; i < s.train.trajectories.size(); ++i)
    REQUIRE(s.train.trajectories[i].U[0][0] == again.train.trajectories[i].U[0][0]);

  SECTION("the shuffle actually reorders") {
    bool moved = false;
    for (std::size_t i = 0; i < s.train.trajectories.size(); ++i)
      moved = moved || s.train.trajectories[i].U[0][0] != double(i);
    REQUIRE(moved);
  }

  SECTION("invalid ratios throw") {
    SplitSpec bad;
    bad.train = 0.8;  // sums to 1.1
    REQUIRE_THROWS_AS(splitDataset(ds, bad), std::invalid_argument);
  }
}

TEST_CASE("dataset files round-trip bit-exactly") {
  const RobotSpec spec = kr500Spec();
  OpenLoopParams p;
  p.duration = 3.0;
  p.repeats = 1;
  p.np = 32;
  Dataset ds = openLoopDataset(spec, p, 2024);
  ds.robot = "kr500";
  REQUIRE(!ds.trajectories.empty());

  const fs::path dir = freshDir("mocu_ds_roundtrip");
  saveDataset(ds, dir);
  const Dataset back = loadDataset(dir);

  REQUIRE(back.dt == ds.dt);
  REQUIRE(back.np == ds.np);
  REQUIRE(back.seed == ds.seed);
  REQUIRE(back.source == ds.source);
  REQUIRE(back.robot == ds.robot);
  REQUIRE(back.trajectories.size() == ds.trajectories.size());
  for (std::size_t i = 0; i < ds.trajectories.size(); ++i)
    REQUIRE(sameTrajectory(ds.trajectories[i], back.trajectories[i]));

  SECTION("tampered trajectory file fails the checksum") {
    const fs::path tf = dir / "traj_000000.csv";
    std::string body;
    {
      std::ifstream f(tf, std::ios::binary);
      std::ostringstream b;
      b << f.rdbuf();
      body = b.str();
    }
    // flip one digit inside a data field: still parses, no longer checksums
    const std::size_t pos = body.find_first_of("123456789", body.find('\n') + 3);
    REQUIRE(pos != std::string::npos);
    body[pos] = body[pos] == '7' ? '8' : '7';
    {
      std::ofstream f(tf, std::ios::binary);
      f << body;
    }
    REQUIRE_THROWS_WITH(loadDataset(dir), Catch::Matchers::ContainsSubstring("checksum"));
  }

  SECTION("missing directory fails") {
    REQUIRE_THROWS_WITH(loadDataset(freshDir("mocu_ds_nowhere")),
                        Catch::Matchers::ContainsSubstring("manifest"));
  }

  fs::remove_all(dir);
}
