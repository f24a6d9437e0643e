#ifndef MOCU_DATAGEN_HPP
#define MOCU_DATAGEN_HPP

// Dataset construction. Open-loop data comes from excitation signals driven
// through the exact plant with violation trimming; closed-loop data comes
// from the receding-horizon controller tracking synthetic inertial
// references. Both are segmented into fixed-length training windows and can
// be written to and read back from a plain-text directory layout bit-exactly.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mocu/kinematics.hpp"
#include "mocu/nmpc.hpp"
#include "mocu/rng.hpp"

namespace mocu {

// ---------------------------------------------------------------------------
// excitation signals

enum class SignalKind { Step, Walk, Periodic, Sine, Splines };

inline constexpr std::array<SignalKind, 5> kSignalKinds = {
    SignalKind::Step, SignalKind::Walk, SignalKind::Periodic, SignalKind::Sine,
    SignalKind::Splines};

inline const char* signalKindName(SignalKind k) {
  switch (k) {
    case SignalKind::Step: return "step";
    case SignalKind::Walk: return "walk";
    case SignalKind::Periodic: return "periodic";
    case SignalKind::Sine: return "sine";
    case SignalKind::Splines: return "splines";
  }
  return "?";
}

namespace detail {

// natural cubic spline through (ts, vs): second derivatives by the standard
// tridiagonal sweep, zero curvature at both ends
inline std::vector<double> splineCurvatures(const std::vector<double>& ts,
                                            const std::vector<double>& vs) {
  const std::size_t n = ts.size();
  std::vector<double> m(n, 0.0);
  if (n < 3) return m;
  std::vector<double> diag(n, 1.0), off(n, 0.0), rhs(n, 0.0);
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const double h0 = ts[k] - ts[k - 1], h1 = ts[k + 1] - ts[k];
    diag[k] = 2.0 * (h0 + h1);
    off[k] = h1;
    rhs[k] = 6.0 * ((vs[k + 1] - vs[k]) / h1 - (vs[k] - vs[k - 1]) / h0);
  }
  for (std::size_t k = 2; k + 1 < n; ++k) {
    const double w = (ts[k] - ts[k - 1]) / diag[k - 1];
    diag[k] -= w * off[k - 1];
    rhs[k] -= w * rhs[k - 1];
  }
  for (std::size_t k = n - 2; k >= 1; --k)
    m[k] = (rhs[k] - (k + 2 < n ? off[k] * m[k + 1] : 0.0)) / diag[k];
  return m;
}

inline double splineEval(const std::vector<double>& ts, const std::vector<double>& vs,
                         const std::vector<double>& m, double t) {
  std::size_t hi = std::upper_bound(ts.begin(), ts.end(), t) - ts.begin();
  hi = std::min(std::max<std::size_t>(hi, 1), ts.size() - 1);
  const std::size_t lo = hi - 1;
  const double h = ts[hi] - ts[lo], dl = t - ts[lo], dr = ts[hi] - t;
  return m[lo] * dr * dr * dr / (6.0 * h) + m[hi] * dl * dl * dl / (6.0 * h) +
         (vs[lo] / h - m[lo] * h / 6.0) * dr + (vs[hi] / h - m[hi] * h / 6.0) * dl;
}

}  // namespace detail

// Acceleration profile for joints jointLo..jointHi (inclusive, zero-based);
// untargeted joints stay zero. Magnitudes never exceed the per-joint
// acceleration limit. Draw order per targeted joint is part of the contract:
// kind parameters first, then any per-step noise.
inline std::vector<JointAccel> generateSignal(const RobotSpec& spec, SignalKind kind, int jointLo,
                                              int jointHi, int steps, double dt, Rng& rng) {
  if (jointLo < 0 || jointHi < jointLo || jointHi > 5)
    throw std::invalid_argument("generateSignal: bad joint range");
  if (steps < 1) throw std::invalid_argument("generateSignal: steps must be positive");

  std::vector<JointAccel> U(steps, JointAccel{});
  for (int j = jointLo; j <= jointHi; ++j) {
    const double lim = spec.qddMax[j];
    switch (kind) {
      case SignalKind::Step: {
        int t = 0;
        while (t < steps) {
          const int hold = std::max(1, int(rng.uniform(0.5, 3.0) / dt));
          const double amp = rng.uniform(-lim, lim);
          for (int k = 0; k < hold && t < steps; ++k, ++t) U[t][j] = amp;
        }
        break;
      }
      case SignalKind::Walk: {
        double v = 0.0;
        for (int t = 0; t < steps; ++t) {
          v += rng.uniform(-0.02 * lim, 0.02 * lim);
          v = std::min(lim, std::max(-lim, v));
          U[t][j] = v;
        }
        break;
      }
      case SignalKind::Periodic: {
        const double amp = rng.uniform(0.2, 1.0) * lim;
        const double freq = rng.uniform(0.05, 2.0);
        const bool square = rng.below(2) == 0;
        for (int t = 0; t < steps; ++t) {
          const double phase = freq * t * dt - std::floor(freq * t * dt);
          U[t][j] = square ? (phase < 0.5 ? amp : -amp)
                           : amp * (4.0 * std::abs(phase - 0.5) - 1.0);
        }
        break;
      }
      case SignalKind::Sine: {
        // cosine form so the first sample sits exactly at the peak amplitude
        const double amp = rng.uniform(0.2, 1.0) * lim;
        const double freq = rng.uniform(0.05, 2.0);
        for (int t = 0; t < steps; ++t) U[t][j] = amp * std::cos(2.0 * std::numbers::pi * freq * t * dt);
        break;
      }
      case SignalKind::Splines: {
        std::vector<double> ts{0.0}, vs{rng.uniform(-lim, lim)};
        const double end = steps * dt;
        while (ts.back() < end) {
          ts.push_back(ts.back() + rng.uniform(1.0, 4.0));
          vs.push_back(rng.uniform(-lim, lim));
        }
        const std::vector<double> m = detail::splineCurvatures(ts, vs);
        for (int t = 0; t < steps; ++t) {
          const double v = detail::splineEval(ts, vs, m, t * dt);
          U[t][j] = std::min(lim, std::max(-lim, v));  // spline may overshoot knots
        }
        break;
      }
    }
  }
  return U;
}

// ---------------------------------------------------------------------------
// datasets

struct Dataset {
  double dt = 0.01;
  int np = 0;  // window length of every stored trajectory
  std::uint64_t seed = 0;
  std::string source = "openLoop";  // openLoop | closedLoop
  std::string robot = "kr500";
  std::vector<Trajectory> trajectories;
};

// initial state away from the limits: positions keep a 5% range margin,
// velocities stay within half the speed bound
inline JointState randomValidState(const RobotSpec& spec, Rng& rng) {
  JointState x;
  for (int i = 0; i < 6; ++i) {
    const double range = spec.qUpper[i] - spec.qLower[i];
    x.q[i] = rng.uniform(spec.qLower[i] + 0.05 * range, spec.qUpper[i] - 0.05 * range);
    x.qd[i] = rng.uniform(-0.5 * spec.qdMax[i], 0.5 * spec.qdMax[i]);
  }
  return x;
}

struct OpenLoopParams {
  double duration = 20.0;  // seconds per simulation
  double dt = 0.01;
  int repeats = 100;  // simulations per (signal kind, joint pair) cell
  int np = 256;       // segment window length
};

// Sweep of excitation kinds over every contiguous joint range, each repeated
// with fresh seeds: simulate, cut back to the limit-compliant prefix, and
// keep the full windows. Every loop cell owns one counter-based stream, so
// the result is independent of evaluation order.
inline Dataset openLoopDataset(const RobotSpec& spec, const OpenLoopParams& p,
                               std::uint64_t seed) {
  if (p.np < 1) throw std::invalid_argument("openLoopDataset: np must be positive");
  Dataset ds;
  ds.dt = p.dt;
  ds.np = p.np;
  ds.seed = seed;
  ds.source = "openLoop";
  const int steps = int(std::lround(p.duration / p.dt));

  std::uint64_t cell = 0;
  for (SignalKind kind : kSignalKinds)
    for (int lo = 0; lo < 6; ++lo)
      for (int hi = lo; hi < 6; ++hi)
        for (int rep = 0; rep < p.repeats; ++rep) {
          Rng rng(seed, cell++);
          const JointState x0 = randomValidState(spec, rng);
          const std::vector<JointAccel> U = generateSignal(spec, kind, lo, hi, steps, p.dt, rng);
          const SimResult sim = simulateOpenLoop(spec, x0, U, p.dt);

          // states 0..v-1 are compliant; a usable step needs both endpoints
          const std::size_t v = sim.firstViolationIndex;
          const std::size_t usable =
              v > std::size_t(steps) ? std::size_t(steps) : (v == 0 ? 0 : v - 1);
          if (usable < std::size_t(p.np)) continue;

          Trajectory prefix;
          prefix.dt = p.dt;
          prefix.U.assign(sim.traj.U.begin(), sim.traj.U.begin() + usable);
          prefix.Y.assign(sim.traj.Y.begin(), sim.traj.Y.begin() + usable);
          prefix.X.assign(sim.traj.X.begin(), sim.traj.X.begin() + usable + 1);
          for (Trajectory& w : segmentTrajectories({prefix}, p.np))
            ds.trajectories.push_back(std::move(w));
        }
  return ds;
}

// ---------------------------------------------------------------------------
// synthetic inertial references

// Deviations from the resting output level, one row per control period.
// Channels 0..2 are body angular rates, 3..5 specific-force components.
struct ReferenceScenario {
  double dt = 0.01;
  std::vector<std::array<double, 6>> channels;
};

// Band-limited reference built from three ingredients per channel: a small
// bank of low-frequency sinusoids, twice-smoothed gaussian noise, and a few
// smoothed step events. The per-channel budget split keeps the peak below
// the requested magnitude cap.
inline ReferenceScenario synthReference(Rng& rng, double duration, double dt = 0.01,
                                        double omegaMax = 0.5, double accelMax = 5.0) {
  if (duration <= 0.0) throw std::invalid_argument("synthReference: duration must be positive");
  const int steps = int(std::lround(duration / dt));
  ReferenceScenario sc;
  sc.dt = dt;
  sc.channels.assign(steps, {});

  auto smooth = [&](std::vector<double>& s, double tau) {
    const double alpha = dt / (tau + dt);
    for (int pass = 0; pass < 2; ++pass) {
      double y = 0.0;
      for (double& v : s) {
        y += alpha * (v - y);
        v = y;
      }
    }
  };
  auto capTo = [](std::vector<double>& s, double cap) {
    double peak = 0.0;
    for (double v : s) peak = std::max(peak, std::abs(v));
    const double scale = peak > 0.0 ? cap / peak : 0.0;
    for (double& v : s) v *= scale;
  };

  for (int c = 0; c < 6; ++c) {
    const double bound = c < 3 ? omegaMax : accelMax;

    double ampSum = 0.0;
    std::array<double, 4> amp, freq, phase;
    for (int k = 0; k < 4; ++k) {
      amp[k] = rng.uniform(0.2, 1.0);
      freq[k] = rng.uniform(0.02, 1.2);
      phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
      ampSum += amp[k];
    }
    for (int k = 0; k < 4; ++k) amp[k] *= 0.55 * bound / ampSum;

    std::vector<double> noise(steps);
    for (double& v : noise) v = rng.gaussian();
    smooth(noise, 0.2);
    capTo(noise, 0.25 * bound);

    std::vector<double> stepsSig(steps, 0.0);
    for (int e = 0; e < 3; ++e) {
      const int at = int(rng.uniform(0.0, double(steps)));
      const double level = rng.uniform(-1.0, 1.0);
      for (int t = at; t < steps; ++t) stepsSig[t] += level;
    }
    smooth(stepsSig, 0.25);
    capTo(stepsSig, 0.2 * bound);

    for (int t = 0; t < steps; ++t) {
      double v = noise[t] + stepsSig[t];
      for (int k = 0; k < 4; ++k) v += amp[k] * std::sin(2.0 * std::numbers::pi * freq[k] * t * dt + phase[k]);
      sc.channels[t][c] = v;
    }
  }
  return sc;
}

// A reference the machine can actually render: drive the exact plant with a
// gentle excitation from the neutral pose and record its inertial outputs.
// Free-form band-limited references routinely demand sustained accelerations
// no limited-workspace arm can hold, which makes every tracking controller
// drift into the position limits; recording a compliant motion sidesteps
// that by construction. The excitation is rescaled until the whole run stays
// within limits.
inline ReferenceScenario feasibleReference(const RobotSpec& spec, Rng& rng, double duration,
                                           double dt = 0.01, double scale = 0.25) {
  if (duration <= 0.0) throw std::invalid_argument("feasibleReference: duration must be positive");
  const int steps = int(std::lround(duration / dt));
  if (steps < 1) throw std::invalid_argument("feasibleReference: duration shorter than dt");
  const std::array<double, 6> rest = restOutput(spec);
  double s = scale;
  for (int attempt = 0; attempt < 12; ++attempt) {
    static constexpr SignalKind kinds[3] = {SignalKind::Sine, SignalKind::Splines,
                                            SignalKind::Periodic};
    const SignalKind kind = kinds[rng.below(3)];
    std::vector<JointAccel> U = generateSignal(spec, kind, 0, 5, steps, dt, rng);
    for (JointAccel& u : U)
      for (double& v : u) v *= s;
    const SimResult sim = simulateOpenLoop(spec, JointState{}, U, dt);
    if (sim.firstViolationIndex > std::size_t(steps)) {
      ReferenceScenario sc;
      sc.dt = dt;
      sc.channels = sim.traj.Y;
      for (auto& y : sc.channels)
        for (int k = 0; k < 6; ++k) y[k] -= rest[k];
      return sc;
    }
    s *= 0.7;
  }
  throw std::runtime_error("feasibleReference: no compliant excitation found");
}

// ---------------------------------------------------------------------------
// closed-loop generation

// Tracks rest + scenario deviations with the receding-horizon controller and
// windows the resulting recordings. Windows containing any limit violation
// are dropped (a constraint-respecting controller should produce none).
inline Dataset closedLoopDataset(const RobotSpec& spec, const NmpcConfig& cfg,
                                 const std::vector<ReferenceScenario>& scenarios, int np,
                                 std::uint64_t seed, int* solveFailures = nullptr) {
  if (np < 1) throw std::invalid_argument("closedLoopDataset: np must be positive");
  Dataset ds;
  ds.dt = cfg.dt;
  ds.np = np;
  ds.seed = seed;
  ds.source = "closedLoop";
  const std::array<double, 6> rest = restOutput(spec);
  int fails = 0;

  for (const ReferenceScenario& sc : scenarios) {
    std::vector<std::array<double, 6>> refs(sc.channels.size());
    for (std::size_t t = 0; t < refs.size(); ++t)
      for (int k = 0; k < 6; ++k) refs[t][k] = rest[k] + sc.channels[t][k];

    const ClosedLoopResult run = nmpcClosedLoop(spec, cfg, std::array<double, 12>{}, refs);
    fails += run.failures;

    for (Trajectory& w : segmentTrajectories({run.traj}, np)) {
      bool clean = true;
      for (std::size_t t = 0; clean && t < w.X.size(); ++t) {
        const JointAccel* u = t < w.U.size() ? &w.U[t] : nullptr;
        clean = !checkLimits(spec, rowToState(w.X[t]), u).any;
      }
      if (clean) ds.trajectories.push_back(std::move(w));
    }
  }
  if (solveFailures) *solveFailures = fails;
  return ds;
}

// ---------------------------------------------------------------------------
// splits

struct SplitSpec {
  double train = 0.7;
  double val = 0.2;
  double test = 0.1;
  std::uint64_t shuffleSeed = 0;
};

struct DatasetSplit {
  Dataset train, val, test;
};

// Deterministic shuffle, then train/val by floor and the remainder as test:
// disjoint and exhaustive by construction.
inline DatasetSplit splitDataset(const Dataset& ds, const SplitSpec& sp) {
  if (sp.train < 0.0 || sp.val < 0.0 || sp.test < 0.0 ||
      std::abs(sp.train + sp.val + sp.test - 1.0) > 1e-9)
    throw std::invalid_argument("splitDataset: ratios must be nonnegative and sum to one");

  const std::size_t J = ds.trajectories.size();
  std::vector<std::size_t> order(J);
  for (std::size_t i = 0; i < J; ++i) order[i] = i;
  Rng rng(sp.shuffleSeed, 0);
  for (std::size_t i = J; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  const std::size_t nTrain = std::size_t(std::floor(double(J) * sp.train));
  const std::size_t nVal = std::size_t(std::floor(double(J) * sp.val));

  DatasetSplit out;
  for (Dataset* part : {&out.train, &out.val, &out.test}) {
    part->dt = ds.dt;
    part->np = ds.np;
    part->seed = ds.seed;
    part->source = ds.source;
    part->robot = ds.robot;
  }
  for (std::size_t i = 0; i < J; ++i) {
    Dataset& part = i < nTrain ? out.train : (i < nTrain + nVal ? out.val : out.test);
    part.trajectories.push_back(ds.trajectories[order[i]]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// on-disk format

namespace detail {

inline std::uint64_t fnv1a64(const std::string& bytes, std::uint64_t h = 14695981039346656037ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// 17 significant digits: enough to reproduce any double exactly on re-parse
inline std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string trajFileName(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "traj_%06zu.csv", index);
  return buf;
}

inline std::string renderTrajectory(const Trajectory& tr) {
  std::string s = "t,u1,u2,u3,u4,u5,u6,q1,q2,q3,q4,q5,q6,qd1,qd2,qd3,qd4,qd5,qd6,y1,y2,y3,y4,y5,y6\n";
  for (std::size_t t = 0; t < tr.X.size(); ++t) {
    const bool last = t == tr.steps();
    s += std::to_string(t);
    for (int i = 0; i < 6; ++i) s += "," + g17(last ? 0.0 : tr.U[t][i]);
    for (int i = 0; i < 12; ++i) s += "," + g17(tr.X[t][i]);
    for (int i = 0; i < 6; ++i) s += "," + g17(last ? 0.0 : tr.Y[t][i]);
    s += "\n";
  }
  return s;
}

inline std::vector<double> parseCsvRow(const std::string& line, std::size_t expect,
                                       const std::string& where) {
  std::vector<double> row;
  std::size_t pos = 0;
  while (pos <= line.size()) {
    const std::size_t next = line.find(',', pos);
    const std::string field = line.substr(pos, next == std::string::npos ? next : next - pos);
    char* end = nullptr;
    row.push_back(std::strtod(field.c_str(), &end));
    if (end == field.c_str()) throw std::runtime_error("dataset: bad number in " + where);
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  if (row.size() != expect) throw std::runtime_error("dataset: wrong column count in " + where);
  return row;
}

}  // namespace detail

// Directory layout: manifest.txt plus one csv per trajectory. The manifest
// carries a chained checksum over the trajectory files in index order, so a
// modified or truncated file fails loudly at load time.
inline void saveDataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::uint64_t sum = 14695981039346656037ULL;
  for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
    const std::string body = detail::renderTrajectory(ds.trajectories[i]);
    sum = detail::fnv1a64(body, sum);
    std::ofstream f(dir / detail::trajFileName(i), std::ios::binary);
    if (!f) throw std::runtime_error("dataset: cannot write " + detail::trajFileName(i));
    f << body;
  }
  char sumHex[24];
  std::snprintf(sumHex, sizeof sumHex, "%016llx", static_cast<unsigned long long>(sum));

  std::ofstream mf(dir / "manifest.txt", std::ios::binary);
  if (!mf) throw std::runtime_error("dataset: cannot write manifest");
  mf << "mocu-dataset v1\n"
     << "dt " << detail::g17(ds.dt) << "\n"
     << "np " << ds.np << "\n"
     << "trajectories " << ds.trajectories.size() << "\n"
     << "seed " << ds.seed << "\n"
     << "source " << ds.source << "\n"
     << "robot " << ds.robot << "\n"
     << "checksum " << sumHex << "\n";
}

inline Dataset loadDataset(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.txt", std::ios::binary);
  if (!mf) throw std::runtime_error("dataset: missing manifest in " + dir.string());
  std::string magic;
  std::getline(mf, magic);
  if (magic != "mocu-dataset v1") throw std::runtime_error("dataset: unrecognized manifest magic");

  Dataset ds;
  std::size_t count = 0;
  std::string declaredSum;
  std::string line;
  while (std::getline(mf, line)) {
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "dt") ss >> ds.dt;
    else if (key == "np") ss >> ds.np;
    else if (key == "trajectories") ss >> count;
    else if (key == "seed") ss >> ds.seed;
    else if (key == "source") ss >> ds.source;
    else if (key == "robot") ss >> ds.robot;
    else if (key == "checksum") ss >> declaredSum;
    else if (!key.empty()) throw std::runtime_error("dataset: unknown manifest key " + key);
    if (ss.fail()) throw std::runtime_error("dataset: malformed manifest line: " + line);
  }
  if (declaredSum.empty()) throw std::runtime_error("dataset: manifest lacks checksum");

  std::uint64_t sum = 14695981039346656037ULL;
  for (std::size_t i = 0; i < count; ++i) {
    const std::string name = detail::trajFileName(i);
    std::ifstream f(dir / name, std::ios::binary);
    if (!f) throw std::runtime_error("dataset: missing " + name);
    std::ostringstream buf;
    buf << f.rdbuf();
    const std::string body = buf.str();
    sum = detail::fnv1a64(body, sum);

    Trajectory tr;
    tr.dt = ds.dt;
    std::istringstream rows(body);
    std::string row;
    std::getline(rows, row);  // header
    std::size_t t = 0;
    while (std::getline(rows, row)) {
      if (row.empty()) continue;
      const std::vector<double> v = detail::parseCsvRow(row, 25, name);
      if (std::size_t(v[0]) != t) throw std::runtime_error("dataset: bad step index in " + name);
      std::array<double, 12> x;
      for (int k = 0; k < 12; ++k) x[k] = v[7 + k];
      tr.X.push_back(x);
      if (t < std::size_t(ds.np)) {
        std::array<double, 6> u, y;
        for (int k = 0; k < 6; ++k) {
          u[k] = v[1 + k];
          y[k] = v[19 + k];
        }
        tr.U.push_back(u);
        tr.Y.push_back(y);
      }
      ++t;
    }
    if (tr.X.size() != std::size_t(ds.np) + 1)
      throw std::runtime_error("dataset: wrong row count in " + name);
    ds.trajectories.push_back(std::move(tr));
  }

  char sumHex[24];
  std::snprintf(sumHex, sizeof sumHex, "%016llx", static_cast<unsigned long long>(sum));
  if (declaredSum != sumHex) throw std::runtime_error("dataset: checksum mismatch");
  return ds;
}

// Standalone trajectory files reuse the dataset row format (step index, six
// controls, twelve states, six outputs). The step column carries no time
// unit, so loading takes the sample period explicitly.
inline void saveTrajectoryCsv(const Trajectory& tr, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("trajectory: cannot write " + path.string());
  f << detail::renderTrajectory(tr);
}

inline Trajectory loadTrajectoryCsv(const std::filesystem::path& path, double dt) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("trajectory: cannot open " + path.string());
  Trajectory tr;
  tr.dt = dt;
  std::string row;
  std::getline(f, row);  // header
  std::size_t t = 0;
  while (std::getline(f, row)) {
    if (row.empty()) continue;
    const std::vector<double> v = detail::parseCsvRow(row, 25, path.string());
    if (std::size_t(v[0]) != t) throw std::runtime_error("trajectory: bad step index in " + path.string());
    std::array<double, 12> x;
    for (int k = 0; k < 12; ++k) x[k] = v[7 + k];
    tr.X.push_back(x);
    std::array<double, 6> u, y;
    for (int k = 0; k < 6; ++k) {
      u[k] = v[1 + k];
      y[k] = v[19 + k];
    }
    tr.U.push_back(u);
    tr.Y.push_back(y);
    ++t;
  }
  if (tr.X.size() < 2) throw std::runtime_error("trajectory: too few rows in " + path.string());
  // the final row's control and output are padding, not data
  tr.U.pop_back();
  tr.Y.pop_back();
  return tr;
}

// Reference scenarios are stored with a real-time first column so the file is
// self-describing: the sample period is recovered from the first step.
// Channels hold deviations from the resting output; consumers add it back.
inline void saveReferenceCsv(const ReferenceScenario& sc, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("reference: cannot write " + path.string());
  f << "t,y1,y2,y3,y4,y5,y6\n";
  for (std::size_t t = 0; t < sc.channels.size(); ++t) {
    f << detail::g17(double(t) * sc.dt);
    for (int k = 0; k < 6; ++k) f << "," << detail::g17(sc.channels[t][k]);
    f << "\n";
  }
}

inline ReferenceScenario loadReferenceCsv(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("reference: cannot open " + path.string());
  ReferenceScenario sc;
  std::string row;
  std::getline(f, row);  // header
  std::vector<double> times;
  while (std::getline(f, row)) {
    if (row.empty()) continue;
    const std::vector<double> v = detail::parseCsvRow(row, 7, path.string());
    times.push_back(v[0]);
    std::array<double, 6> y;
    for (int k = 0; k < 6; ++k) y[k] = v[1 + k];
    sc.channels.push_back(y);
  }
  if (sc.channels.size() < 2) throw std::runtime_error("reference: too few rows in " + path.string());
  if (times[0] != 0.0) throw std::runtime_error("reference: time must start at zero in " + path.string());
  sc.dt = times[1];
  if (sc.dt <= 0.0) throw std::runtime_error("reference: nonpositive sample period in " + path.string());
  for (std::size_t t = 0; t < times.size(); ++t)
    if (std::abs(times[t] - double(t) * sc.dt) > 1e-9 * (1.0 + times[t]))
      throw std::runtime_error("reference: non-uniform time grid in " + path.string());
  return sc;
}

}  // namespace mocu

#endif
