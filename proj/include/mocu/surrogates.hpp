#ifndef MOCU_SURROGATES_HPP
#define MOCU_SURROGATES_HPP

// Learned plant approximations. Three state-transition candidates (additive
// two-network model, neural ODE, exact integrator) and three output
// candidates (additive, recursive latent, mixed analytical) with shared
// rollout, loss, and curriculum-training machinery. Every model has a plain
// double evaluation path and a tape path; training differentiates the tape
// path, validation and deployment-side prediction use the double path.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "mocu/checkpoint.hpp"
#include "mocu/kinematics.hpp"
#include "mocu/mlp.hpp"
#include "mocu/optim.hpp"
#include "mocu/rng.hpp"
#include "mocu/tape.hpp"

namespace mocu {

enum class StateKind { Nssm, Node1, Node2 };
enum class OutputKind { Nssm, Latent, Mixed };

inline std::string stateKindName(StateKind k) {
  switch (k) {
    case StateKind::Nssm: return "nssm";
    case StateKind::Node1: return "node1";
    default: return "node2";
  }
}

inline StateKind stateKindFromName(const std::string& s) {
  if (s == "nssm") return StateKind::Nssm;
  if (s == "node1") return StateKind::Node1;
  if (s == "node2") return StateKind::Node2;
  throw std::invalid_argument("unknown state model kind: " + s);
}

inline std::string outputKindName(OutputKind k) {
  switch (k) {
    case OutputKind::Nssm: return "nssm";
    case OutputKind::Latent: return "latent";
    default: return "mixed";
  }
}

inline OutputKind outputKindFromName(const std::string& s) {
  if (s == "nssm") return OutputKind::Nssm;
  if (s == "latent") return OutputKind::Latent;
  if (s == "mixed") return OutputKind::Mixed;
  throw std::invalid_argument("unknown output model kind: " + s);
}

// x_{t+1} = f1(x) + f2(u)            additive two-network model
// x_{t+1} = RK4 step of f1(x, u, t)  learned derivative field
// x_{t+1} = Euler step               exact, no trainable parameters
struct StateModel {
  StateKind kind = StateKind::Node2;
  double dt = 0.01;
  Mlp f1, f2;
};

// y = f3(x) + f4(u)                          additive
// y = f4(f3(y_prev, x, u)), latent dim 12    recursive encoder/decoder
// y composed from exact pose + learned pose derivatives (see mixed step)
struct OutputModel {
  OutputKind kind = OutputKind::Mixed;
  int latentDim = 12;
  Mlp f3, f4, f5;
  // test hook: substitute f3..f5 by the analytic pose derivatives, which
  // turns the mixed model into the exact plant
  bool exactOracle = false;
};

struct PlantSurrogate {
  RobotSpec robot;
  StateModel state;
  OutputModel output;
};

inline StateModel makeStateModel(StateKind kind, std::uint64_t seed, double dt = 0.01) {
  StateModel m;
  m.kind = kind;
  m.dt = dt;
  if (kind == StateKind::Nssm) {
    m.f1 = initMlp({12, 12, 1, 64, Activation::Gelu, true}, seed, 1);
    m.f2 = initMlp({6, 12, 1, 64, Activation::Gelu, true}, seed, 2);
  } else if (kind == StateKind::Node1) {
    // derivative field over [x, u, t]
    m.f1 = initMlp({19, 12, 1, 64, Activation::Gelu, true}, seed, 3);
  }
  return m;
}

inline OutputModel makeOutputModel(OutputKind kind, std::uint64_t seed) {
  OutputModel m;
  m.kind = kind;
  if (kind == OutputKind::Nssm) {
    m.f3 = initMlp({12, 6, 1, 64, Activation::Gelu, true}, seed, 4);
    m.f4 = initMlp({6, 6, 1, 64, Activation::Gelu, true}, seed, 5);
  } else if (kind == OutputKind::Latent) {
    m.f3 = initMlp({24, 12, 1, 64, Activation::Gelu, true}, seed, 6);  // encoder
    m.f4 = initMlp({12, 6, 1, 64, Activation::Gelu, true}, seed, 7);   // decoder
  } else {
    // inputs [g(qd), F] / [g(qd), Fd] / [g(u), F], outputs flattened top
    // three pose rows
    m.f3 = initMlp({24, 12, 1, 64, Activation::Gelu, true}, seed, 8);
    m.f4 = initMlp({24, 12, 1, 64, Activation::Gelu, true}, seed, 9);
    m.f5 = initMlp({24, 12, 1, 64, Activation::Gelu, true}, seed, 10);
  }
  return m;
}

inline PlantSurrogate makeSurrogate(const RobotSpec& robot, StateKind sk, OutputKind ok,
                                    std::uint64_t seed) {
  return PlantSurrogate{robot, makeStateModel(sk, seed), makeOutputModel(ok, seed + 1)};
}

// ---------------------------------------------------------------------------
// double-path evaluation

// top three rows of a homogeneous transform: [R row-major (9), translation (3)]
inline std::array<double, 12> flattenPoseTop(const Mat4<double>& T) {
  std::array<double, 12> f{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) f[i * 3 + j] = T(i, j);
  for (int i = 0; i < 3; ++i) f[9 + i] = T(i, 3);
  return f;
}

// Inertial output from a flattened pose and its (possibly predicted) first
// and second derivatives. The angular velocity takes the antisymmetric part
// of R'*Rdot directly, with no consistency check: predicted derivatives are
// not guaranteed to keep R'*Rdot skew.
inline std::array<double, 6> composeInertial(const std::array<double, 12>& F,
                                             const std::array<double, 12>& Fd,
                                             const std::array<double, 12>& Fdd,
                                             const Vec3<double>& gravity) {
  const double* R = F.data();
  const double* Rd = Fd.data();
  double S[9];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += R[k * 3 + i] * Rd[k * 3 + j];
      S[i * 3 + j] = s;
    }
  std::array<double, 6> y{};
  y[0] = 0.5 * (S[7] - S[5]);
  y[1] = 0.5 * (S[2] - S[6]);
  y[2] = 0.5 * (S[3] - S[1]);
  double aH[3], aG[3];
  for (int i = 0; i < 3; ++i) {
    aH[i] = R[0 * 3 + i] * Fdd[9] + R[1 * 3 + i] * Fdd[10] + R[2 * 3 + i] * Fdd[11];
    aG[i] = -(R[0 * 3 + i] * gravity[0] + R[1 * 3 + i] * gravity[1] + R[2 * 3 + i] * gravity[2]);
  }
  y[3] = aH[0] + aG[0];
  y[4] = aH[1] + aG[1];
  y[5] = aH[2];
  return y;
}

namespace detail {

// derivative field of the neural-ODE state model
inline void node1Field(const StateModel& m, const double* x, const double* u, double tau,
                       double* k) {
  double in[19];
  for (int i = 0; i < 12; ++i) in[i] = x[i];
  for (int i = 0; i < 6; ++i) in[12 + i] = u[i];
  in[18] = tau;
  mlpEval(m.f1, in, k);
}

}  // namespace detail

inline std::array<double, 12> stateStep(const StateModel& m, const std::array<double, 12>& x,
                                        const std::array<double, 6>& u) {
  std::array<double, 12> out{};
  switch (m.kind) {
    case StateKind::Nssm: {
      double a[12], b[12];
      mlpEval(m.f1, x.data(), a);
      mlpEval(m.f2, u.data(), b);
      for (int i = 0; i < 12; ++i) out[i] = a[i] + b[i];
      break;
    }
    case StateKind::Node1: {
      const double h = m.dt;
      double k1[12], k2[12], k3[12], k4[12], xs[12];
      detail::node1Field(m, x.data(), u.data(), 0.0, k1);
      for (int i = 0; i < 12; ++i) xs[i] = x[i] + 0.5 * h * k1[i];
      detail::node1Field(m, xs, u.data(), 0.5 * h, k2);
      for (int i = 0; i < 12; ++i) xs[i] = x[i] + 0.5 * h * k2[i];
      detail::node1Field(m, xs, u.data(), 0.5 * h, k3);
      for (int i = 0; i < 12; ++i) xs[i] = x[i] + h * k3[i];
      detail::node1Field(m, xs, u.data(), h, k4);
      for (int i = 0; i < 12; ++i)
        out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      break;
    }
    case StateKind::Node2:
      out = stateToRow(integrateState(rowToState(x), u, m.dt));
      break;
  }
  return out;
}

// One output prediction at (x, u). yPrev is required for the recursive latent
// model and ignored otherwise. For the mixed model the optional fdOut/fddOut
// receive the predicted flattened pose derivatives.
inline std::array<double, 6> outputStep(const RobotSpec& robot, const OutputModel& m,
                                        const std::array<double, 12>& x,
                                        const std::array<double, 6>& u,
                                        const std::array<double, 6>* yPrev = nullptr,
                                        std::array<double, 12>* fdOut = nullptr,
                                        std::array<double, 12>* fddOut = nullptr) {
  std::array<double, 6> y{};
  switch (m.kind) {
    case OutputKind::Nssm: {
      double a[6], b[6];
      mlpEval(m.f3, x.data(), a);
      mlpEval(m.f4, u.data(), b);
      for (int i = 0; i < 6; ++i) y[i] = a[i] + b[i];
      break;
    }
    case OutputKind::Latent: {
      if (!yPrev) throw std::invalid_argument("latent output model needs the previous output");
      double in[24], latent[12];
      for (int i = 0; i < 6; ++i) in[i] = (*yPrev)[i];
      for (int i = 0; i < 12; ++i) in[6 + i] = x[i];
      for (int i = 0; i < 6; ++i) in[18 + i] = u[i];
      mlpEval(m.f3, in, latent);
      mlpEval(m.f4, latent, y.data());
      break;
    }
    case OutputKind::Mixed: {
      std::array<double, 6> q, qd;
      for (int i = 0; i < 6; ++i) {
        q[i] = x[i];
        qd[i] = x[6 + i];
      }
      std::array<double, 12> fd{}, fdd{};
      const std::array<double, 12> F = flattenPoseTop(forwardKinematics(robot, q));
      if (m.exactOracle) {
        const PoseDerivatives pd = poseDerivatives(robot, q, qd, u);
        fd = flattenPoseTop(pd.Fd);
        fdd = flattenPoseTop(pd.Fdd);
      } else {
        double in3[24], in4[24], in5[24], a4[12], a5[12];
        for (int i = 0; i < 6; ++i) {
          in3[i] = std::sin(qd[i]);
          in3[6 + i] = std::cos(qd[i]);
          in5[i] = std::sin(u[i]);
          in5[6 + i] = std::cos(u[i]);
        }
        for (int i = 0; i < 12; ++i) {
          in3[12 + i] = F[i];
          in5[12 + i] = F[i];
        }
        mlpEval(m.f3, in3, fd.data());
        for (int i = 0; i < 12; ++i) {
          in4[i] = in3[i];
          in4[12 + i] = fd[i];
        }
        mlpEval(m.f4, in4, a4);
        mlpEval(m.f5, in5, a5);
        for (int i = 0; i < 12; ++i) fdd[i] = a4[i] + a5[i];
      }
      y = composeInertial(F, fd, fdd, robot.gravityWorld);
      if (fdOut) *fdOut = fd;
      if (fddOut) *fddOut = fdd;
      break;
    }
  }
  return y;
}

struct RolloutResult {
  std::vector<std::array<double, 12>> X;        // n_p + 1 predicted states
  std::vector<std::array<double, 6>> Y;         // n_p predicted outputs
  std::vector<std::array<double, 12>> Fd, Fdd;  // mixed model only
};

// Recursive surrogate prediction: states step forward from x0 while outputs
// are predicted at each (state, input) pair. The latent output model seeds
// its recursion with *y0 and emits it unchanged as Y[0].
inline RolloutResult rollout(const PlantSurrogate& s, const std::array<double, 12>& x0,
                             const std::vector<std::array<double, 6>>& U, int np,
                             const std::array<double, 6>* y0 = nullptr) {
  if (np < 1 || U.size() < std::size_t(np))
    throw std::invalid_argument("rollout: horizon exceeds the available inputs");
  RolloutResult r;
  r.X.reserve(np + 1);
  r.Y.reserve(np);
  r.X.push_back(x0);
  const bool latent = s.output.kind == OutputKind::Latent;
  if (latent && !y0) throw std::invalid_argument("rollout: latent output model needs y0");
  const bool mixed = s.output.kind == OutputKind::Mixed;
  for (int t = 0; t < np; ++t) {
    if (latent && t == 0) {
      r.Y.push_back(*y0);
    } else {
      std::array<double, 12> fd{}, fdd{};
      const std::array<double, 6>* prev = latent ? &r.Y.back() : nullptr;
      r.Y.push_back(outputStep(s.robot, s.output, r.X[t], U[t], prev, mixed ? &fd : nullptr,
                               mixed ? &fdd : nullptr));
      if (mixed) {
        r.Fd.push_back(fd);
        r.Fdd.push_back(fdd);
      }
    }
    r.X.push_back(stateStep(s.state, r.X[t], U[t]));
  }
  return r;
}

// ---------------------------------------------------------------------------
// tape-path evaluation (batched, rows = trajectories)

struct StateBinding {
  MlpBinding f1, f2;
};

struct OutputBinding {
  MlpBinding f3, f4, f5;
};

inline StateBinding bindState(Tape& t, const StateModel& m) {
  StateBinding b;
  if (m.kind == StateKind::Nssm) {
    b.f1 = bindMlp(t, m.f1);
    b.f2 = bindMlp(t, m.f2);
  } else if (m.kind == StateKind::Node1) {
    b.f1 = bindMlp(t, m.f1);
  }
  return b;
}

inline OutputBinding bindOutput(Tape& t, const OutputModel& m) {
  OutputBinding b;
  b.f3 = bindMlp(t, m.f3);
  b.f4 = bindMlp(t, m.f4);
  if (m.kind == OutputKind::Mixed) b.f5 = bindMlp(t, m.f5);
  return b;
}

inline int stateStepT(Tape& t, const StateModel& m, const StateBinding& b, int x, int u) {
  switch (m.kind) {
    case StateKind::Nssm:
      return t.add(mlpApply(t, b.f1, x), mlpApply(t, b.f2, u));
    case StateKind::Node1: {
      const double h = m.dt;
      const int rows = t.val(x).rows;
      auto field = [&](int xs, double tau) {
        Array tc(rows, 1);
        for (auto& v : tc.data) v = tau;
        return mlpApply(t, b.f1, t.concatCols({xs, u, t.constant(tc)}));
      };
      const int k1 = field(x, 0.0);
      const int k2 = field(t.add(x, t.scale(k1, 0.5 * h)), 0.5 * h);
      const int k3 = field(t.add(x, t.scale(k2, 0.5 * h)), 0.5 * h);
      const int k4 = field(t.add(x, t.scale(k3, h)), h);
      return t.add(x, t.scale(t.add(t.add(k1, k4), t.scale(t.add(k2, k3), 2.0)), h / 6.0));
    }
    default: {  // exact Euler, differentiable through slices
      const int q = t.sliceCols(x, 0, 6);
      const int qd = t.sliceCols(x, 6, 12);
      return t.concatCols({t.add(q, t.scale(qd, m.dt)), t.add(qd, t.scale(u, m.dt))});
    }
  }
}

namespace detail {

// y = [vee((S - S')/2), aTC_xy, aH_z] with S = R'*Rd, from flattened poses
inline int composeInertialT(Tape& t, const RobotSpec& robot, int fFlat, int fdFlat,
                            int fddFlat) {
  const int rows = t.val(fFlat).rows;
  const int R = t.sliceCols(fFlat, 0, 9);
  const int S = t.bmm33tn(R, t.sliceCols(fdFlat, 0, 9));
  Array V(9, 3);
  V.at(7, 0) = 0.5;
  V.at(5, 0) = -0.5;
  V.at(2, 1) = 0.5;
  V.at(6, 1) = -0.5;
  V.at(3, 2) = 0.5;
  V.at(1, 2) = -0.5;
  const int omega = t.matmul(S, t.constant(V));
  const int aH = t.bmv3tn(R, t.sliceCols(fddFlat, 9, 12));
  Array negG(rows, 3);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < 3; ++j) negG.at(i, j) = -robot.gravityWorld[j];
  const int aTC = t.add(aH, t.bmv3tn(R, t.constant(negG)));
  return t.concatCols({omega, t.sliceCols(aTC, 0, 2), t.sliceCols(aH, 2, 3)});
}

inline int featureAngles(Tape& t, int v) { return t.concatCols({t.sin(v), t.cos(v)}); }

}  // namespace detail

// yPrev is consumed by the latent model only; pass -1 otherwise.
inline int outputStepT(Tape& t, const PlantSurrogate& s, const OutputBinding& b, int x, int u,
                       int yPrev = -1) {
  switch (s.output.kind) {
    case OutputKind::Nssm:
      return t.add(mlpApply(t, b.f3, x), mlpApply(t, b.f4, u));
    case OutputKind::Latent: {
      if (yPrev < 0) throw std::invalid_argument("latent output model needs the previous output");
      return mlpApply(t, b.f4, mlpApply(t, b.f3, t.concatCols({yPrev, x, u})));
    }
    default: {
      const int q = t.sliceCols(x, 0, 6);
      const int qd = t.sliceCols(x, 6, 12);
      const int F = t.fkFlat(q, &s.robot);
      const int gqd = detail::featureAngles(t, qd);
      const int fd = mlpApply(t, b.f3, t.concatCols({gqd, F}));
      const int fdd = t.add(mlpApply(t, b.f4, t.concatCols({gqd, fd})),
                            mlpApply(t, b.f5, t.concatCols({detail::featureAngles(t, u), F})));
      return detail::composeInertialT(t, s.robot, F, fd, fdd);
    }
  }
}

// ---------------------------------------------------------------------------
// losses (double path; the training loops build the same quantities on tape)

// mean over trajectories, steps, and components of the squared recursive
// state prediction error
inline double stateLoss(const StateModel& m, const std::vector<Trajectory>& chunks, int np) {
  double acc = 0.0;
  std::size_t cnt = 0;
  for (const Trajectory& tr : chunks) {
    if (tr.steps() < std::size_t(np))
      throw std::invalid_argument("stateLoss: horizon exceeds trajectory length");
    std::array<double, 12> x = tr.X[0];
    for (int t = 0; t < np; ++t) {
      x = stateStep(m, x, tr.U[t]);
      for (int i = 0; i < 12; ++i) {
        const double e = x[i] - tr.X[t + 1][i];
        acc += e * e;
      }
      cnt += 12;
    }
  }
  return cnt ? acc / double(cnt) : 0.0;
}

// targets for the mixed output loss: flattened true pose derivative rows
// along a recorded trajectory
struct PoseDerivTargets {
  std::vector<std::array<double, 12>> fd, fdd;
};

inline PoseDerivTargets poseDerivativeTargets(const RobotSpec& robot, const Trajectory& tr) {
  PoseDerivTargets out;
  out.fd.reserve(tr.steps());
  out.fdd.reserve(tr.steps());
  for (std::size_t t = 0; t < tr.steps(); ++t) {
    std::array<double, 6> q, qd;
    for (int i = 0; i < 6; ++i) {
      q[i] = tr.X[t][i];
      qd[i] = tr.X[t][6 + i];
    }
    const PoseDerivatives pd = poseDerivatives(robot, q, qd, tr.U[t]);
    out.fd.push_back(flattenPoseTop(pd.Fd));
    out.fdd.push_back(flattenPoseTop(pd.Fdd));
  }
  return out;
}

// Output-model loss with the state trajectory supplied by a frozen state
// model rolled from each chunk's initial state. Additive/latent kinds score
// squared output error; the mixed kind scores its two pose-derivative terms
// against the true derivatives of the recorded states.
inline double outputLoss(const OutputModel& m, const StateModel& frozen, const RobotSpec& robot,
                         const std::vector<Trajectory>& chunks, int np) {
  double acc = 0.0;
  std::size_t terms = 0;
  for (const Trajectory& tr : chunks) {
    if (tr.steps() < std::size_t(np))
      throw std::invalid_argument("outputLoss: horizon exceeds trajectory length");
    std::array<double, 12> x = tr.X[0];
    std::array<double, 6> yPrev = tr.Y.empty() ? std::array<double, 6>{} : tr.Y[0];
    PoseDerivTargets tgt;
    if (m.kind == OutputKind::Mixed) tgt = poseDerivativeTargets(robot, tr);
    for (int t = 0; t < np; ++t) {
      if (m.kind == OutputKind::Mixed) {
        std::array<double, 12> fd{}, fdd{};
        outputStep(robot, m, x, tr.U[t], nullptr, &fd, &fdd);
        double s = 0.0;
        for (int i = 0; i < 12; ++i) {
          const double e1 = fd[i] - tgt.fd[t][i];
          const double e2 = fdd[i] - tgt.fdd[t][i];
          s += e1 * e1 + e2 * e2;
        }
        acc += s / 12.0;
        terms += 1;
      } else if (m.kind == OutputKind::Latent) {
        if (t > 0) {
          yPrev = outputStep(robot, m, x, tr.U[t], &yPrev);
          for (int i = 0; i < 6; ++i) {
            const double e = yPrev[i] - tr.Y[t][i];
            acc += e * e;
          }
          terms += 6;
        }
      } else {
        const std::array<double, 6> y = outputStep(robot, m, x, tr.U[t]);
        for (int i = 0; i < 6; ++i) {
          const double e = y[i] - tr.Y[t][i];
          acc += e * e;
        }
        terms += 6;
      }
      x = stateStep(frozen, x, tr.U[t]);
    }
  }
  return terms ? acc / double(terms) : 0.0;
}

// ---------------------------------------------------------------------------
// evaluation metrics

inline double stateRolloutRmse(const StateModel& m, const std::vector<Trajectory>& chunks) {
  if (chunks.empty()) return 0.0;
  return std::sqrt(stateLoss(m, chunks, int(chunks.front().steps())));
}

// RMSE of predicted vs recorded outputs over full-pipeline rollouts. Only
// predicted entries count: the latent model's seeded Y[0] is excluded.
inline double outputRolloutRmse(const PlantSurrogate& s, const std::vector<Trajectory>& chunks) {
  double acc = 0.0;
  std::size_t cnt = 0;
  for (const Trajectory& tr : chunks) {
    const int np = int(tr.steps());
    const RolloutResult r = rollout(s, tr.X[0], tr.U, np, tr.Y.empty() ? nullptr : &tr.Y[0]);
    const int t0 = s.output.kind == OutputKind::Latent ? 1 : 0;
    for (int t = t0; t < np; ++t)
      for (int i = 0; i < 6; ++i) {
        const double e = r.Y[t][i] - tr.Y[t][i];
        acc += e * e;
        cnt += 1;
      }
  }
  return cnt ? std::sqrt(acc / double(cnt)) : 0.0;
}

// ---------------------------------------------------------------------------
// training

struct TrainConfig {
  std::vector<int> curriculum{32, 64, 128, 256};
  int maxEpochs = 500;
  int patience = 150;       // early stop after this many stagnant validation epochs
  int plateauEpochs = 100;  // halve the learning rate after this many stagnant train epochs
  double lrFactor = 0.5;
  double lr = 0.01;
  double weightDecay = 0.01;
  int batchSize = 256;
  std::uint64_t seed = 1;
  bool verbose = false;
};

struct TrainReport {
  std::vector<double> trainLoss, valLoss;   // one entry per epoch
  std::vector<std::size_t> stageStart;      // epoch index where each stage began
  double bestVal = std::numeric_limits<double>::infinity();
  int skippedBatches = 0;                   // non-finite losses dropped
};

namespace detail {

inline std::vector<double> gatherParams(const std::vector<Mlp*>& nets) {
  std::vector<double> all;
  for (const Mlp* n : nets) all.insert(all.end(), n->params.begin(), n->params.end());
  return all;
}

inline void scatterParams(const std::vector<double>& all, std::vector<Mlp*>& nets) {
  std::size_t off = 0;
  for (Mlp* n : nets) {
    std::copy(all.begin() + off, all.begin() + off + n->params.size(), n->params.begin());
    off += n->params.size();
  }
}

inline void shuffle(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
}

// one optimizer step from an already-backpropagated tape
template <class Bindings>
inline bool applyGrads(Tape& t, double lossValue, const Bindings& bindings,
                       std::vector<Mlp*>& nets, OptimizerState& opt) {
  if (!std::isfinite(lossValue)) return false;
  std::vector<double> grads;
  for (const MlpBinding* b : bindings) mlpAccumulateGrads(t, *b, grads);
  std::vector<double> params = gatherParams(nets);
  radamStep(opt, params, grads);
  scatterParams(params, nets);
  return true;
}

}  // namespace detail

inline std::vector<Mlp*> trainableNets(StateModel& m) {
  switch (m.kind) {
    case StateKind::Nssm: return {&m.f1, &m.f2};
    case StateKind::Node1: return {&m.f1};
    default: return {};
  }
}

inline std::vector<Mlp*> trainableNets(OutputModel& m) {
  if (m.kind == OutputKind::Mixed) return {&m.f3, &m.f4, &m.f5};
  return {&m.f3, &m.f4};
}

// Curriculum training of a state model: for each horizon in the curriculum
// the recordings are re-segmented and the recursive prediction loss is
// minimized over minibatches of chunks. Each stage restarts the learning
// rate and scheduler and ends at its best-validation parameters.
inline TrainReport trainStateModel(StateModel& model, const std::vector<Trajectory>& trainTrajs,
                                   const std::vector<Trajectory>& valTrajs,
                                   const TrainConfig& cfg) {
  TrainReport rep;
  std::vector<Mlp*> nets = trainableNets(model);
  if (nets.empty()) {  // exact integrator: nothing to fit
    const int np = cfg.curriculum.empty() ? 1 : cfg.curriculum.back();
    rep.bestVal = stateLoss(model, segmentTrajectories(valTrajs, np), np);
    return rep;
  }
  Rng rng(cfg.seed, 40);
  for (int np : cfg.curriculum) {
    const std::vector<Trajectory> chunks = segmentTrajectories(trainTrajs, np);
    const std::vector<Trajectory> valChunks = segmentTrajectories(valTrajs, np);
    if (chunks.empty()) throw std::invalid_argument("trainStateModel: no trajectory covers n_p");
    rep.stageStart.push_back(rep.trainLoss.size());

    OptimizerState opt;
    opt.lr = cfg.lr;
    opt.weightDecay = cfg.weightDecay;
    ScheduleState sched;
    sched.patience = cfg.patience;
    sched.plateauEpochs = cfg.plateauEpochs;
    sched.factor = cfg.lrFactor;
    std::vector<double> best = detail::gatherParams(nets);
    double bestVal = std::numeric_limits<double>::infinity();

    std::vector<std::size_t> order(chunks.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.maxEpochs; ++epoch) {
      detail::shuffle(order, rng);
      double epochLoss = 0.0;
      std::size_t seen = 0;
      for (std::size_t base = 0; base < order.size(); base += cfg.batchSize) {
        const int B = int(std::min<std::size_t>(cfg.batchSize, order.size() - base));
        Tape t;
        const StateBinding sb = bindState(t, model);
        Array x0(B, 12);
        for (int r = 0; r < B; ++r)
          for (int i = 0; i < 12; ++i) x0.at(r, i) = chunks[order[base + r]].X[0][i];
        int x = t.constant(std::move(x0));
        int lossSum = -1;
        for (int step = 0; step < np; ++step) {
          Array u(B, 6), target(B, 12);
          for (int r = 0; r < B; ++r) {
            const Trajectory& tr = chunks[order[base + r]];
            for (int i = 0; i < 6; ++i) u.at(r, i) = tr.U[step][i];
            for (int i = 0; i < 12; ++i) target.at(r, i) = tr.X[step + 1][i];
          }
          x = stateStepT(t, model, sb, x, t.constant(std::move(u)));
          const int l = t.mse(x, t.constant(std::move(target)));
          lossSum = lossSum < 0 ? l : t.scalarAdd(lossSum, l);
        }
        const int loss = t.scalarScale(lossSum, 1.0 / np);
        const double lv = t.val(loss).data[0];
        t.backward(loss);
        std::vector<const MlpBinding*> bs;
        if (model.kind == StateKind::Nssm)
          bs = {&sb.f1, &sb.f2};
        else
          bs = {&sb.f1};
        if (detail::applyGrads(t, lv, bs, nets, opt)) {
          epochLoss += lv * B;
          seen += B;
        } else {
          ++rep.skippedBatches;
        }
      }
      const double trainLoss = seen ? epochLoss / double(seen) : 0.0;
      const double valLoss = stateLoss(model, valChunks, np);
      rep.trainLoss.push_back(trainLoss);
      rep.valLoss.push_back(valLoss);
      if (valLoss < bestVal) {
        bestVal = valLoss;
        best = detail::gatherParams(nets);
      }
      if (cfg.verbose && epoch % 10 == 0)
        std::fprintf(stderr, "[state %s np=%d] epoch %d train %.3e val %.3e lr %.4g\n",
                     stateKindName(model.kind).c_str(), np, epoch, trainLoss, valLoss, opt.lr);
      if (schedulerUpdate(sched, opt, trainLoss, valLoss).stop) break;
    }
    detail::scatterParams(best, nets);
    rep.bestVal = bestVal;
  }
  return rep;
}

// Curriculum training of an output model on top of a frozen state model.
// State features are precomputed per chunk with the frozen model (plain
// double arithmetic) and fed to the tape as constants; only the output
// networks receive gradients. Additive and mixed kinds have no recursion and
// train on flattened (state, input, target) pairs; the latent kind rolls its
// output recursion per chunk.
inline TrainReport trainOutputModel(OutputModel& model, const StateModel& frozen,
                                    const RobotSpec& robot,
                                    const std::vector<Trajectory>& trainTrajs,
                                    const std::vector<Trajectory>& valTrajs,
                                    const TrainConfig& cfg) {
  TrainReport rep;
  std::vector<Mlp*> nets = trainableNets(model);
  Rng rng(cfg.seed, 41);

  for (int np : cfg.curriculum) {
    const std::vector<Trajectory> chunks = segmentTrajectories(trainTrajs, np);
    const std::vector<Trajectory> valChunks = segmentTrajectories(valTrajs, np);
    if (chunks.empty()) throw std::invalid_argument("trainOutputModel: no trajectory covers n_p");
    rep.stageStart.push_back(rep.trainLoss.size());

    // frozen state rollouts, once per stage
    std::vector<std::vector<std::array<double, 12>>> xhat(chunks.size());
    for (std::size_t c = 0; c < chunks.size(); ++c) {
      xhat[c].reserve(np);
      std::array<double, 12> x = chunks[c].X[0];
      for (int t = 0; t < np; ++t) {
        xhat[c].push_back(x);
        x = stateStep(frozen, x, chunks[c].U[t]);
      }
    }

    // pair-wise feature/target rows for the non-recursive kinds
    struct Rows {
      std::vector<std::array<double, 24>> in3, in5;
      std::vector<std::array<double, 12>> gqd, tgtFd, tgtFdd;
      std::vector<std::array<double, 12>> x;
      std::vector<std::array<double, 6>> u, y;
    } rows;
    if (model.kind != OutputKind::Latent) {
      for (std::size_t c = 0; c < chunks.size(); ++c) {
        PoseDerivTargets tgt;
        if (model.kind == OutputKind::Mixed) tgt = poseDerivativeTargets(robot, chunks[c]);
        for (int t = 0; t < np; ++t) {
          const std::array<double, 12>& x = xhat[c][t];
          const std::array<double, 6>& u = chunks[c].U[t];
          if (model.kind == OutputKind::Nssm) {
            rows.x.push_back(x);
            rows.u.push_back(u);
            rows.y.push_back(chunks[c].Y[t]);
          } else {
            std::array<double, 6> q, qd;
            for (int i = 0; i < 6; ++i) {
              q[i] = x[i];
              qd[i] = x[6 + i];
            }
            const std::array<double, 12> F = flattenPoseTop(forwardKinematics(robot, q));
            std::array<double, 24> in3{}, in5{};
            std::array<double, 12> gqd{};
            for (int i = 0; i < 6; ++i) {
              gqd[i] = std::sin(qd[i]);
              gqd[6 + i] = std::cos(qd[i]);
              in5[i] = std::sin(u[i]);
              in5[6 + i] = std::cos(u[i]);
            }
            for (int i = 0; i < 12; ++i) {
              in3[i] = gqd[i];
              in3[12 + i] = F[i];
              in5[12 + i] = F[i];
            }
            rows.in3.push_back(in3);
            rows.in5.push_back(in5);
            rows.gqd.push_back(gqd);
            rows.tgtFd.push_back(tgt.fd[t]);
            rows.tgtFdd.push_back(tgt.fdd[t]);
          }
        }
      }
    }

    OptimizerState opt;
    opt.lr = cfg.lr;
    opt.weightDecay = cfg.weightDecay;
    ScheduleState sched;
    sched.patience = cfg.patience;
    sched.plateauEpochs = cfg.plateauEpochs;
    sched.factor = cfg.lrFactor;
    std::vector<double> best = detail::gatherParams(nets);
    double bestVal = std::numeric_limits<double>::infinity();

    const std::size_t units =
        model.kind == OutputKind::Latent ? chunks.size()
        : model.kind == OutputKind::Nssm ? rows.x.size()
                                         : rows.in3.size();
    std::vector<std::size_t> order(units);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.maxEpochs; ++epoch) {
      detail::shuffle(order, rng);
      double epochLoss = 0.0;
      std::size_t seen = 0;
      for (std::size_t base = 0; base < order.size(); base += cfg.batchSize) {
        const int B = int(std::min<std::size_t>(cfg.batchSize, order.size() - base));
        Tape t;
        const OutputBinding ob = bindOutput(t, model);
        int loss = -1;
        if (model.kind == OutputKind::Nssm) {
          Array x(B, 12), u(B, 6), y(B, 6);
          for (int r = 0; r < B; ++r) {
            const std::size_t p = order[base + r];
            for (int i = 0; i < 12; ++i) x.at(r, i) = rows.x[p][i];
            for (int i = 0; i < 6; ++i) {
              u.at(r, i) = rows.u[p][i];
              y.at(r, i) = rows.y[p][i];
            }
          }
          const int yh = t.add(mlpApply(t, ob.f3, t.constant(std::move(x))),
                               mlpApply(t, ob.f4, t.constant(std::move(u))));
          loss = t.mse(yh, t.constant(std::move(y)));
        } else if (model.kind == OutputKind::Mixed) {
          Array in3(B, 24), in5(B, 24), gqd(B, 12), tfd(B, 12), tfdd(B, 12);
          for (int r = 0; r < B; ++r) {
            const std::size_t p = order[base + r];
            for (int i = 0; i < 24; ++i) {
              in3.at(r, i) = rows.in3[p][i];
              in5.at(r, i) = rows.in5[p][i];
            }
            for (int i = 0; i < 12; ++i) {
              gqd.at(r, i) = rows.gqd[p][i];
              tfd.at(r, i) = rows.tgtFd[p][i];
              tfdd.at(r, i) = rows.tgtFdd[p][i];
            }
          }
          const int fd = mlpApply(t, ob.f3, t.constant(std::move(in3)));
          const int fdd =
              t.add(mlpApply(t, ob.f4, t.concatCols({t.constant(std::move(gqd)), fd})),
                    mlpApply(t, ob.f5, t.constant(std::move(in5))));
          loss = t.scalarAdd(t.mse(fd, t.constant(std::move(tfd))),
                             t.mse(fdd, t.constant(std::move(tfdd))));
        } else {
          Array y0(B, 6);
          for (int r = 0; r < B; ++r)
            for (int i = 0; i < 6; ++i) y0.at(r, i) = chunks[order[base + r]].Y[0][i];
          int yPrev = t.constant(std::move(y0));
          int lossSum = -1;
          for (int step = 1; step < np; ++step) {
            Array x(B, 12), u(B, 6), y(B, 6);
            for (int r = 0; r < B; ++r) {
              const std::size_t c = order[base + r];
              for (int i = 0; i < 12; ++i) x.at(r, i) = xhat[c][step][i];
              for (int i = 0; i < 6; ++i) {
                u.at(r, i) = chunks[c].U[step][i];
                y.at(r, i) = chunks[c].Y[step][i];
              }
            }
            yPrev = mlpApply(
                t, ob.f4,
                mlpApply(t, ob.f3,
                         t.concatCols({yPrev, t.constant(std::move(x)), t.constant(std::move(u))})));
            const int l = t.mse(yPrev, t.constant(std::move(y)));
            lossSum = lossSum < 0 ? l : t.scalarAdd(lossSum, l);
          }
          loss = t.scalarScale(lossSum, 1.0 / std::max(1, np - 1));
        }
        const double lv = t.val(loss).data[0];
        t.backward(loss);
        std::vector<const MlpBinding*> bs{&ob.f3, &ob.f4};
        if (model.kind == OutputKind::Mixed) bs.push_back(&ob.f5);
        if (detail::applyGrads(t, lv, bs, nets, opt)) {
          epochLoss += lv * B;
          seen += B;
        } else {
          ++rep.skippedBatches;
        }
      }
      const double trainLoss = seen ? epochLoss / double(seen) : 0.0;
      const double valLoss = outputLoss(model, frozen, robot, valChunks, np);
      rep.trainLoss.push_back(trainLoss);
      rep.valLoss.push_back(valLoss);
      if (valLoss < bestVal) {
        bestVal = valLoss;
        best = detail::gatherParams(nets);
      }
      if (cfg.verbose && epoch % 10 == 0)
        std::fprintf(stderr, "[output %s np=%d] epoch %d train %.3e val %.3e lr %.4g\n",
                     outputKindName(model.kind).c_str(), np, epoch, trainLoss, valLoss, opt.lr);
      if (schedulerUpdate(sched, opt, trainLoss, valLoss).stop) break;
    }
    detail::scatterParams(best, nets);
    rep.bestVal = bestVal;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// checkpoint plumbing

inline Checkpoint surrogateCheckpoint(const PlantSurrogate& s, std::uint64_t seed) {
  Checkpoint c;
  c.kind = "surrogate";
  c.seed = seed;
  c.meta["state_kind"] = stateKindName(s.state.kind);
  c.meta["output_kind"] = outputKindName(s.output.kind);
  c.meta["dt"] = std::to_string(s.state.dt);
  if (s.state.kind == StateKind::Nssm) {
    c.nets.emplace_back("f1", s.state.f1);
    c.nets.emplace_back("f2", s.state.f2);
  } else if (s.state.kind == StateKind::Node1) {
    c.nets.emplace_back("f1", s.state.f1);
  }
  c.nets.emplace_back("f3", s.output.f3);
  c.nets.emplace_back("f4", s.output.f4);
  if (s.output.kind == OutputKind::Mixed) c.nets.emplace_back("f5", s.output.f5);
  return c;
}

inline PlantSurrogate loadSurrogate(const std::string& path, const RobotSpec& robot) {
  const Checkpoint c = loadCheckpoint(path);
  requireKind(c, "surrogate", path);
  PlantSurrogate s;
  s.robot = robot;
  const StateKind sk = stateKindFromName(c.meta.at("state_kind"));
  const OutputKind ok = outputKindFromName(c.meta.at("output_kind"));
  const StateModel protoState = makeStateModel(sk, 0);
  const OutputModel protoOut = makeOutputModel(ok, 0);
  s.state.kind = sk;
  s.output.kind = ok;
  if (sk == StateKind::Nssm) {
    s.state.f1 = requireNet(c, "f1", protoState.f1.spec, path);
    s.state.f2 = requireNet(c, "f2", protoState.f2.spec, path);
  } else if (sk == StateKind::Node1) {
    s.state.f1 = requireNet(c, "f1", protoState.f1.spec, path);
  }
  s.output.f3 = requireNet(c, "f3", protoOut.f3.spec, path);
  s.output.f4 = requireNet(c, "f4", protoOut.f4.spec, path);
  if (ok == OutputKind::Mixed) s.output.f5 = requireNet(c, "f5", protoOut.f5.spec, path);
  return s;
}

}  // namespace mocu

#endif
