#ifndef MOCU_KINEMATICS_HPP
#define MOCU_KINEMATICS_HPP

// Exact joint-space plant of a 6R serial arm with a head frame: double
// integrator per joint, standard distal DH transform chain, and the inertial
// quantities sensed at the head (body-frame angular velocity and specific
// force with tilt coordination).
//
// Conventions used throughout:
//   - state x = [q, qd] (12), input u = qdd (6), forward Euler at fixed dt
//   - T_i = RotZ(q_i + offset_i) * TransZ(d_i) * TransX(a_i) * RotX(alpha_i)
//   - F = T_1 ... T_6 * T_head, world frame on the left, head frame on the
//     right, so rotationOf(F) maps head coordinates to world coordinates
//   - a trajectory stores X[0..n], U[0..n-1], Y[0..n-1] with
//     Y[t] = plantOutput(X[t], U[t])

#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mocu/dual.hpp"
#include "mocu/smallmat.hpp"

namespace mocu {

struct DhRow {
  double a = 0.0;
  double d = 0.0;
  double alpha = 0.0;
  double offset = 0.0;
};

struct RobotSpec {
  std::array<DhRow, 6> dh{};
  std::array<double, 6> qUpper{};
  std::array<double, 6> qLower{};
  std::array<double, 6> qdMax{};   // symmetric speed bound, magnitude
  std::array<double, 6> qddMax{};  // symmetric acceleration bound, magnitude
  Mat4<double> headTransform = Mat4<double>::identity();
  Vec3<double> gravityWorld = {0.0, 0.0, -9.81};
};

struct JointState {
  std::array<double, 6> q{};
  std::array<double, 6> qd{};
};

using JointAccel = std::array<double, 6>;
using Pose = Mat4<double>;

struct PoseDerivatives {
  Mat4<double> F;    // pose
  Mat4<double> Fd;   // first time derivative
  Mat4<double> Fdd;  // second time derivative
};

struct InertialOutput {
  Vec3<double> omega{};  // body-frame angular velocity
  double aTCx = 0.0;     // tilt-coordinated specific force, x
  double aTCy = 0.0;     // tilt-coordinated specific force, y
  double aZ = 0.0;       // raw body-frame z acceleration (heave)

  std::array<double, 6> vec() const { return {omega[0], omega[1], omega[2], aTCx, aTCy, aZ}; }
};

struct ViolationReport {
  std::array<bool, 6> q{};
  std::array<bool, 6> qd{};
  std::array<bool, 6> qdd{};
  bool any = false;
  double worstNormalized = 0.0;  // max |normalized| over all checked variables
};

// Trajectory record: X has one more row than U and Y; X rows are [q, qd].
struct Trajectory {
  double dt = 0.01;
  std::vector<std::array<double, 6>> U;
  std::vector<std::array<double, 12>> X;
  std::vector<std::array<double, 6>> Y;

  std::size_t steps() const { return U.size(); }
};

struct SimResult {
  Trajectory traj;
  // state index of the first limit-violating state, or X.size() if none
  std::size_t firstViolationIndex = 0;
};

inline std::array<double, 12> stateToRow(const JointState& s) {
  std::array<double, 12> r{};
  for (int i = 0; i < 6; ++i) {
    r[i] = s.q[i];
    r[6 + i] = s.qd[i];
  }
  return r;
}

inline JointState rowToState(const std::array<double, 12>& r) {
  JointState s;
  for (int i = 0; i < 6; ++i) {
    s.q[i] = r[i];
    s.qd[i] = r[6 + i];
  }
  return s;
}

// ---------------------------------------------------------------------------
// transform chain, templated on the scalar

template <class S>
Mat4<S> dhTransformT(const DhRow& r, const S& q) {
  using std::cos;
  using std::sin;
  const S th = q + r.offset;
  const S ct = cos(th);
  const S st = sin(th);
  const double ca = std::cos(r.alpha);
  const double sa = std::sin(r.alpha);
  Mat4<S> T;
  T(0, 0) = ct;
  T(0, 1) = st * (-ca);
  T(0, 2) = st * sa;
  T(0, 3) = ct * r.a;
  T(1, 0) = st;
  T(1, 1) = ct * ca;
  T(1, 2) = ct * (-sa);
  T(1, 3) = st * r.a;
  T(2, 1) = S(sa);
  T(2, 2) = S(ca);
  T(2, 3) = S(r.d);
  T(3, 3) = S(1);
  return T;
}

// d/dtheta of the DH transform (rotation angle only; a, d, alpha are fixed)
template <class S>
Mat4<S> dhTransformDThetaT(const DhRow& r, const S& q) {
  using std::cos;
  using std::sin;
  const S th = q + r.offset;
  const S ct = cos(th);
  const S st = sin(th);
  const double ca = std::cos(r.alpha);
  const double sa = std::sin(r.alpha);
  Mat4<S> T;
  T(0, 0) = -st;
  T(0, 1) = ct * (-ca);
  T(0, 2) = ct * sa;
  T(0, 3) = st * (-r.a);
  T(1, 0) = ct;
  T(1, 1) = st * (-ca);
  T(1, 2) = st * sa;
  T(1, 3) = ct * r.a;
  return T;
}

template <class S>
Mat4<S> dhTransformDDThetaT(const DhRow& r, const S& q) {
  using std::cos;
  using std::sin;
  const S th = q + r.offset;
  const S ct = cos(th);
  const S st = sin(th);
  const double ca = std::cos(r.alpha);
  const double sa = std::sin(r.alpha);
  Mat4<S> T;
  T(0, 0) = -ct;
  T(0, 1) = st * ca;
  T(0, 2) = st * (-sa);
  T(0, 3) = ct * (-r.a);
  T(1, 0) = -st;
  T(1, 1) = ct * (-ca);
  T(1, 2) = ct * sa;
  T(1, 3) = st * (-r.a);
  return T;
}

template <class S>
Mat4<S> scaleMat(const Mat4<S>& m, const S& c) {
  Mat4<S> r;
  for (int i = 0; i < 16; ++i) r.v[i] = m.v[i] * c;
  return r;
}

template <class S>
Mat4<S> forwardKinematicsT(const RobotSpec& spec, const std::array<S, 6>& q) {
  Mat4<S> F = dhTransformT(spec.dh[0], q[0]);
  for (int i = 1; i < 6; ++i) F = F * dhTransformT(spec.dh[i], q[i]);
  Mat4<S> head;
  for (int i = 0; i < 16; ++i) head.v[i] = S(spec.headTransform.v[i]);
  return F * head;
}

// Pose together with its first and second time derivatives along the motion
// q(t) with q(0)=q, q'(0)=qd, q''(0)=u. Single product-rule sweep over the
// chain; algebraically identical to contracting the per-joint partials.
template <class S>
void fkTimeDerivativesT(const RobotSpec& spec, const std::array<S, 6>& q,
                        const std::array<S, 6>& qd, const std::array<S, 6>& u,
                        Mat4<S>& F, Mat4<S>& Fd, Mat4<S>& Fdd) {
  Mat4<S> A = Mat4<S>::identity();
  Mat4<S> Ad, Add;
  for (int k = 0; k < 6; ++k) {
    const Mat4<S> T = dhTransformT(spec.dh[k], q[k]);
    const Mat4<S> Tp = dhTransformDThetaT(spec.dh[k], q[k]);
    const Mat4<S> Tpp = dhTransformDDThetaT(spec.dh[k], q[k]);
    const Mat4<S> Td = scaleMat(Tp, qd[k]);
    const Mat4<S> Tdd = scaleMat(Tpp, qd[k] * qd[k]) + scaleMat(Tp, u[k]);
    Mat4<S> nA = A * T;
    Mat4<S> nAd = Ad * T + A * Td;
    Mat4<S> nAdd = Add * T + scaleMat(Ad * Td, S(2)) + A * Tdd;
    A = nA;
    Ad = nAd;
    Add = nAdd;
  }
  Mat4<S> head;
  for (int i = 0; i < 16; ++i) head.v[i] = S(spec.headTransform.v[i]);
  F = A * head;
  Fd = Ad * head;
  Fdd = Add * head;
}

// Body-frame angular velocity from R and Rdot: vee of the symmetrized
// R^T Rdot. Inputs that are not a consistent rotation/derivative pair leave a
// defect ||S + S^T||_inf above tol and are rejected.
template <class S>
Vec3<S> angularVelocityT(const Mat3<S>& R, const Mat3<S>& Rd, double tol = 1e-6) {
  const Mat3<S> M = transpose(R) * Rd;
  double defect = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      defect = std::max(defect, std::abs(scalarValue(M(i, j)) + scalarValue(M(j, i))));
  if (defect > tol)
    throw std::runtime_error("angularVelocity: asymmetry defect " + std::to_string(defect) +
                             " exceeds tolerance; R and Rdot are inconsistent");
  Vec3<S> w;
  w[0] = (M(2, 1) - M(1, 2)) * 0.5;
  w[1] = (M(0, 2) - M(2, 0)) * 0.5;
  w[2] = (M(1, 0) - M(0, 1)) * 0.5;
  return w;
}

// Full sensed output [omega, aTC_x, aTC_y, aZ]; heave stays tilt-free.
template <class S>
std::array<S, 6> plantOutputT(const RobotSpec& spec, const std::array<S, 6>& q,
                              const std::array<S, 6>& qd, const std::array<S, 6>& u) {
  Mat4<S> F, Fd, Fdd;
  fkTimeDerivativesT(spec, q, qd, u, F, Fd, Fdd);
  const Mat3<S> R = rotationOf(F);
  const Vec3<S> w = angularVelocityT(R, rotationOf(Fd));
  const Vec3<S> aH = mulT(R, translationOf(Fdd));
  Vec3<S> negG{S(-spec.gravityWorld[0]), S(-spec.gravityWorld[1]), S(-spec.gravityWorld[2])};
  const Vec3<S> gBody = mulT(R, negG);
  return {w[0], w[1], w[2], aH[0] + gBody[0], aH[1] + gBody[1], aH[2]};
}

// ---------------------------------------------------------------------------
// double-precision public surface

inline Mat4<double> dhTransform(const DhRow& r, double q) { return dhTransformT<double>(r, q); }

inline Pose forwardKinematics(const RobotSpec& spec, const std::array<double, 6>& q) {
  return forwardKinematicsT<double>(spec, q);
}

// Per-joint partial derivatives dF/dq_i via prefix/suffix products.
inline std::array<Mat4<double>, 6> fkPartials(const RobotSpec& spec,
                                              const std::array<double, 6>& q) {
  std::array<Mat4<double>, 6> T, prefix;
  std::array<Mat4<double>, 7> suffix;
  for (int i = 0; i < 6; ++i) T[i] = dhTransform(spec.dh[i], q[i]);
  Mat4<double> acc = Mat4<double>::identity();
  for (int i = 0; i < 6; ++i) {
    prefix[i] = acc;  // product of T_0..T_{i-1}
    acc = acc * T[i];
  }
  suffix[6] = spec.headTransform;
  for (int i = 5; i >= 0; --i) suffix[i] = T[i] * suffix[i + 1];  // T_i..T_5 * head
  std::array<Mat4<double>, 6> out;
  for (int i = 0; i < 6; ++i)
    out[i] = prefix[i] * dhTransformDThetaT<double>(spec.dh[i], q[i]) * suffix[i + 1];
  return out;
}

// d2F/dq_i dq_j for i <= j (symmetric in i, j).
inline Mat4<double> fkSecondPartial(const RobotSpec& spec, const std::array<double, 6>& q,
                                    int i, int j) {
  if (i > j) std::swap(i, j);
  std::array<Mat4<double>, 6> T;
  for (int k = 0; k < 6; ++k) T[k] = dhTransform(spec.dh[k], q[k]);
  Mat4<double> acc = Mat4<double>::identity();
  for (int k = 0; k < i; ++k) acc = acc * T[k];
  if (i == j) {
    acc = acc * dhTransformDDThetaT<double>(spec.dh[i], q[i]);
  } else {
    acc = acc * dhTransformDThetaT<double>(spec.dh[i], q[i]);
    for (int k = i + 1; k < j; ++k) acc = acc * T[k];
    acc = acc * dhTransformDThetaT<double>(spec.dh[j], q[j]);
  }
  for (int k = j + 1; k < 6; ++k) acc = acc * T[k];
  return acc * spec.headTransform;
}

// Fdot = sum_i dF/dq_i qd_i
inline Mat4<double> fkFirstDerivative(const RobotSpec& spec, const std::array<double, 6>& q,
                                      const std::array<double, 6>& qd) {
  const auto P = fkPartials(spec, q);
  Mat4<double> out;
  for (int i = 0; i < 6; ++i) out = out + P[i] * qd[i];
  return out;
}

// Fddot = sum_ij d2F/dq_i dq_j qd_i qd_j + sum_i dF/dq_i qdd_i
inline Mat4<double> fkSecondDerivative(const RobotSpec& spec, const std::array<double, 6>& q,
                                       const std::array<double, 6>& qd,
                                       const std::array<double, 6>& qdd) {
  Mat4<double> out;
  for (int i = 0; i < 6; ++i) {
    out = out + fkSecondPartial(spec, q, i, i) * (qd[i] * qd[i]);
    for (int j = i + 1; j < 6; ++j)
      out = out + fkSecondPartial(spec, q, i, j) * (2.0 * qd[i] * qd[j]);
  }
  const auto P = fkPartials(spec, q);
  for (int i = 0; i < 6; ++i) out = out + P[i] * qdd[i];
  return out;
}

inline PoseDerivatives poseDerivatives(const RobotSpec& spec, const std::array<double, 6>& q,
                                       const std::array<double, 6>& qd,
                                       const std::array<double, 6>& qdd) {
  PoseDerivatives p;
  fkTimeDerivativesT<double>(spec, q, qd, qdd, p.F, p.Fd, p.Fdd);
  return p;
}

inline Vec3<double> angularVelocity(const Mat3<double>& R, const Mat3<double>& Rd) {
  return angularVelocityT<double>(R, Rd);
}

inline Vec3<double> linearAcceleration(const Mat3<double>& R, const Vec3<double>& rdd) {
  return mulT(R, rdd);
}

inline Vec3<double> tiltCoordination(const Vec3<double>& aHead, const Mat3<double>& R,
                                     const Vec3<double>& gravityWorld) {
  const Vec3<double> negG{-gravityWorld[0], -gravityWorld[1], -gravityWorld[2]};
  const Vec3<double> gBody = mulT(R, negG);
  return {aHead[0] + gBody[0], aHead[1] + gBody[1], aHead[2] + gBody[2]};
}

inline InertialOutput plantOutput(const RobotSpec& spec, const std::array<double, 6>& q,
                                  const std::array<double, 6>& qd, const JointAccel& u) {
  const auto y = plantOutputT<double>(spec, q, qd, u);
  InertialOutput o;
  o.omega = {y[0], y[1], y[2]};
  o.aTCx = y[3];
  o.aTCy = y[4];
  o.aZ = y[5];
  return o;
}

inline InertialOutput plantOutput(const RobotSpec& spec, const JointState& x, const JointAccel& u) {
  return plantOutput(spec, x.q, x.qd, u);
}

// forward Euler step of the per-joint double integrator
inline JointState integrateState(const JointState& x, const JointAccel& u, double dt) {
  JointState n;
  for (int i = 0; i < 6; ++i) {
    n.q[i] = x.q[i] + dt * x.qd[i];
    n.qd[i] = x.qd[i] + dt * u[i];
  }
  return n;
}

// Normalized position: maps [qLower, qUpper] onto [-1, 1]. Boundary values are
// compliant; a violation is strictly |normalized| > 1.
inline double normalizedPosition(const RobotSpec& spec, int joint, double q) {
  return (2.0 * q - (spec.qUpper[joint] + spec.qLower[joint])) /
         (spec.qUpper[joint] - spec.qLower[joint]);
}

inline ViolationReport checkLimits(const RobotSpec& spec, const JointState& x,
                                   const JointAccel* u = nullptr) {
  ViolationReport r;
  for (int i = 0; i < 6; ++i) {
    const double nq = normalizedPosition(spec, i, x.q[i]);
    const double nqd = x.qd[i] / spec.qdMax[i];
    r.worstNormalized = std::max({r.worstNormalized, std::abs(nq), std::abs(nqd)});
    r.q[i] = std::abs(nq) > 1.0;
    r.qd[i] = std::abs(nqd) > 1.0;
    if (u) {
      const double nu = (*u)[i] / spec.qddMax[i];
      r.worstNormalized = std::max(r.worstNormalized, std::abs(nu));
      r.qdd[i] = std::abs(nu) > 1.0;
    }
    r.any = r.any || r.q[i] || r.qd[i] || r.qdd[i];
  }
  return r;
}

inline SimResult simulateOpenLoop(const RobotSpec& spec, const JointState& x0,
                                  const std::vector<JointAccel>& U, double dt) {
  SimResult res;
  Trajectory& tr = res.traj;
  tr.dt = dt;
  tr.U = U;
  tr.X.reserve(U.size() + 1);
  tr.Y.reserve(U.size());
  res.firstViolationIndex = U.size() + 1;
  JointState x = x0;
  for (std::size_t t = 0; t <= U.size(); ++t) {
    tr.X.push_back(stateToRow(x));
    if (res.firstViolationIndex > U.size() && checkLimits(spec, x).any)
      res.firstViolationIndex = t;
    if (t == U.size()) break;
    tr.Y.push_back(plantOutputT<double>(spec, x.q, x.qd, U[t]));
    x = integrateState(x, U[t], dt);
  }
  return res;
}

// inertial output of the motionless home pose (pure gravity through the
// resting head orientation); the natural "no motion" reference level
inline std::array<double, 6> restOutput(const RobotSpec& spec) {
  const std::array<double, 6> zero{};
  return plantOutputT<double>(spec, zero, zero, zero);
}

// Cuts long recordings into back-to-back windows of n_p steps each: X keeps the
// shared boundary state (n_p + 1 rows), U and Y carry n_p rows. Trailing steps
// that do not fill a window are dropped.
inline std::vector<Trajectory> segmentTrajectories(const std::vector<Trajectory>& trajs, int np) {
  if (np < 1) throw std::invalid_argument("segmentTrajectories: horizon must be positive");
  std::vector<Trajectory> chunks;
  for (const Trajectory& tr : trajs) {
    const std::size_t n = tr.steps() / std::size_t(np);
    for (std::size_t c = 0; c < n; ++c) {
      Trajectory w;
      w.dt = tr.dt;
      const std::size_t s = c * np;
      w.U.assign(tr.U.begin() + s, tr.U.begin() + s + np);
      w.Y.assign(tr.Y.begin() + s, tr.Y.begin() + s + np);
      w.X.assign(tr.X.begin() + s, tr.X.begin() + s + np + 1);
      chunks.push_back(std::move(w));
    }
  }
  return chunks;
}

// ---------------------------------------------------------------------------
// robot specs

inline RobotSpec kr500Spec() {
  RobotSpec s;
  const double a[6] = {0.500, 1.300, -0.055, 0.0, 0.0, 0.0};
  const double d[6] = {1.045, 0.0, 0.0, 1.025, 0.0, 0.290};
  const double al[6] = {-1.571, 0.0, -1.571, 1.571, -1.571, 0.0};
  const double of[6] = {0.0, -1.571, 0.0, 0.0, 0.0, 0.0};
  const double qu[6] = {3.229, 1.920, 0.942, 6.109, 2.094, 6.109};
  const double ql[6] = {-3.229, -0.698, -3.316, -6.109, -2.094, -6.109};
  const double vm[6] = {1.571, 1.396, 1.309, 1.571, 1.449, 2.269};
  const double am[6] = {1.676, 1.197, 2.189, 0.564, 1.625, 1.317};
  for (int i = 0; i < 6; ++i) {
    s.dh[i] = {a[i], d[i], al[i], of[i]};
    s.qUpper[i] = qu[i];
    s.qLower[i] = ql[i];
    s.qdMax[i] = vm[i];
    s.qddMax[i] = am[i];
  }
  return s;
}

// Plain-text spec file: one "key v1 v2 ..." entry per line, '#' comments, an
// optional '=' after the key. Keys: dh_a dh_d dh_alpha dh_offset q_upper
// q_lower qd_max qdd_max gravity (3 values) head_transform (16, row-major,
// optional).
inline RobotSpec loadRobotSpec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("loadRobotSpec: cannot open " + path);
  std::map<std::string, std::vector<double>> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    std::vector<double> vals;
    std::string tok;
    while (ls >> tok) {
      if (tok == "=") continue;
      vals.push_back(std::stod(tok));
    }
    kv[key] = vals;
  }
  auto need = [&](const std::string& key, std::size_t n) -> const std::vector<double>& {
    auto it = kv.find(key);
    if (it == kv.end())
      throw std::runtime_error("loadRobotSpec: missing key '" + key + "' in " + path);
    if (it->second.size() != n)
      throw std::runtime_error("loadRobotSpec: key '" + key + "' needs " + std::to_string(n) +
                               " values");
    return it->second;
  };
  RobotSpec s;
  const auto& a = need("dh_a", 6);
  const auto& d = need("dh_d", 6);
  const auto& al = need("dh_alpha", 6);
  const auto& of = need("dh_offset", 6);
  const auto& qu = need("q_upper", 6);
  const auto& ql = need("q_lower", 6);
  const auto& vm = need("qd_max", 6);
  const auto& am = need("qdd_max", 6);
  for (int i = 0; i < 6; ++i) {
    s.dh[i] = {a[i], d[i], al[i], of[i]};
    s.qUpper[i] = qu[i];
    s.qLower[i] = ql[i];
    s.qdMax[i] = vm[i];
    s.qddMax[i] = am[i];
  }
  if (kv.count("gravity")) {
    const auto& g = need("gravity", 3);
    s.gravityWorld = {g[0], g[1], g[2]};
  }
  if (kv.count("head_transform")) {
    const auto& h = need("head_transform", 16);
    for (int i = 0; i < 16; ++i) s.headTransform.v[i] = h[i];
  }
  return s;
}

inline RobotSpec namedRobotSpec(const std::string& name) {
  if (name == "kr500") return kr500Spec();
  return loadRobotSpec(name);  // treat anything else as a file path
}

}  // namespace mocu

#endif
