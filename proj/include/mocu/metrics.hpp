#ifndef MOCU_METRICS_HPP
#define MOCU_METRICS_HPP

// Simulation-quality metrics and the statistical machinery used to compare
// controllers: per-channel RMSE and Pearson correlation, the combined
// performance index, a two-sided Wilcoxon rank-sum test (exact for small
// samples), wall-clock benchmarking, and joint-limit compliance scoring.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "mocu/kinematics.hpp"

namespace mocu {

inline double rmse(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("rmse: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc / double(a.size()));
}

// Pearson correlation coefficient. Degenerate series (zero variance) have no
// defined correlation; identical constants count as perfectly correlated,
// anything else as uncorrelated.
inline double pearsonCC(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("pearsonCC: size mismatch");
  const double n = double(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, sa = 0.0, sb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    sa += (a[i] - ma) * (a[i] - ma);
    sb += (b[i] - mb) * (b[i] - mb);
  }
  if (sa == 0.0 || sb == 0.0) return (sa == 0.0 && sb == 0.0 && ma == mb) ? 1.0 : 0.0;
  return sab / std::sqrt(sa * sb);
}

// Σ_k (error_k − CC_k) over the six output channels. A perfect reproduction
// scores −6, the floor of the index. The default error term is the proper
// RMSE (ℓ2 error over √T); the literal variant divides the ℓ2 error by √k
// with k the 1-based channel number instead.
enum class PiNorm { Rmse, LiteralSqrtK };

inline double performanceIndex(const std::vector<std::array<double, 6>>& sim,
                               const std::vector<std::array<double, 6>>& ref,
                               PiNorm norm = PiNorm::Rmse) {
  if (sim.size() != ref.size() || sim.empty())
    throw std::invalid_argument("performanceIndex: size mismatch");
  double pi = 0.0;
  for (int k = 0; k < 6; ++k) {
    std::vector<double> s(sim.size()), r(sim.size());
    double l2 = 0.0;
    for (std::size_t t = 0; t < sim.size(); ++t) {
      s[t] = sim[t][k];
      r[t] = ref[t][k];
      l2 += (s[t] - r[t]) * (s[t] - r[t]);
    }
    const double err = norm == PiNorm::Rmse ? std::sqrt(l2 / double(sim.size()))
                                            : std::sqrt(l2) / std::sqrt(double(k + 1));
    pi += err - pearsonCC(s, r);
  }
  return pi;
}

namespace detail {

// midranks of the pooled sample (average rank across ties)
inline std::vector<double> midranks(const std::vector<double>& pooled) {
  std::vector<std::size_t> idx(pooled.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return pooled[a] < pooled[b]; });
  std::vector<double> rank(pooled.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && pooled[idx[j + 1]] == pooled[idx[i]]) ++j;
    const double avg = 0.5 * double(i + j) + 1.0;  // ranks are 1-based
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = avg;
    i = j + 1;
  }
  return rank;
}

// exact two-sided tail probability by enumerating every n1-subset's rank sum
inline double exactRankSumP(const std::vector<double>& ranks, std::size_t n1, double observed) {
  const std::size_t N = ranks.size();
  double mean = 0.0;
  for (double r : ranks) mean += r;
  mean *= double(n1) / double(N);
  const double dist = std::abs(observed - mean) - 1e-12;  // guard rounding on ties

  std::uint64_t hits = 0, total = 0;
  std::vector<std::size_t> pick(n1);
  for (std::size_t i = 0; i < n1; ++i) pick[i] = i;
  while (true) {
    double w = 0.0;
    for (std::size_t i : pick) w += ranks[i];
    ++total;
    if (std::abs(w - mean) >= dist) ++hits;
    // next combination in lexicographic order
    std::size_t i = n1;
    while (i > 0) {
      --i;
      if (pick[i] != i + N - n1) break;
      if (i == 0) return double(hits) / double(total);
    }
    if (pick[i] == i + N - n1) return double(hits) / double(total);
    ++pick[i];
    for (std::size_t j = i + 1; j < n1; ++j) pick[j] = pick[j - 1] + 1;
  }
}

}  // namespace detail

struct RankSumResult {
  double statistic = 0.0;  // rank sum of the first sample
  double z = 0.0;          // normal deviate (approximate branch only)
  double p = 1.0;          // two-sided
  bool exact = false;
};

// Two-sided Wilcoxon rank-sum test. Samples of at most 12 each are scored by
// exact enumeration of rank-sum assignments (both tails by distance from the
// mean); larger samples use the tie-corrected normal approximation without a
// continuity correction.
inline RankSumResult wilcoxonRankSum(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("wilcoxonRankSum: empty sample");
  std::vector<double> pooled = a;
  pooled.insert(pooled.end(), b.begin(), b.end());
  const std::vector<double> rank = detail::midranks(pooled);
  RankSumResult res;
  for (std::size_t i = 0; i < a.size(); ++i) res.statistic += rank[i];

  const double n1 = double(a.size()), n2 = double(b.size()), N = n1 + n2;
  if (a.size() <= 12 && b.size() <= 12) {
    res.exact = true;
    res.p = detail::exactRankSumP(rank, a.size(), res.statistic);
    return res;
  }
  const double mean = n1 * (N + 1.0) / 2.0;
  double tieSum = 0.0;
  std::vector<double> sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
    const double t = double(j - i + 1);
    tieSum += t * t * t - t;
    i = j + 1;
  }
  const double var = n1 * n2 / 12.0 * ((N + 1.0) - tieSum / (N * (N - 1.0)));
  if (var <= 0.0) {  // all observations tied
    res.p = 1.0;
    return res;
  }
  res.z = (res.statistic - mean) / std::sqrt(var);
  res.p = std::erfc(std::abs(res.z) / std::sqrt(2.0));
  return res;
}

struct BenchmarkResult {
  std::vector<double> samplesUs;  // per-call wall time, microseconds
  double meanUs = 0.0;
  double medianUs = 0.0;
  double minUs = 0.0;
  double maxUs = 0.0;
};

// Times `calls` invocations of fn with steady_clock; warmup calls run first
// and are not recorded.
inline BenchmarkResult benchmark(const std::function<void()>& fn, int calls = 1000,
                                 int warmup = 10) {
  using clock = std::chrono::steady_clock;
  for (int i = 0; i < warmup; ++i) fn();
  BenchmarkResult r;
  r.samplesUs.reserve(calls);
  for (int i = 0; i < calls; ++i) {
    const auto t0 = clock::now();
    fn();
    const auto t1 = clock::now();
    r.samplesUs.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
  }
  std::vector<double> sorted = r.samplesUs;
  std::sort(sorted.begin(), sorted.end());
  r.minUs = sorted.front();
  r.maxUs = sorted.back();
  r.medianUs = sorted[sorted.size() / 2];
  double acc = 0.0;
  for (double v : r.samplesUs) acc += v;
  r.meanUs = acc / double(r.samplesUs.size());
  return r;
}

struct ComplianceReport {
  std::size_t samples = 0;
  std::size_t positionViolations = 0;
  std::size_t velocityViolations = 0;
  std::size_t accelerationViolations = 0;
  double worstNormalized = 0.0;

  bool clean() const {
    return positionViolations + velocityViolations + accelerationViolations == 0;
  }
  double cleanFraction() const {
    if (samples == 0) return 1.0;
    std::size_t bad = std::max({positionViolations, velocityViolations, accelerationViolations});
    return 1.0 - double(bad) / double(samples);
  }
};

// Normalized joint-limit compliance over a recorded trajectory: every state
// is scored against position/velocity limits, every input against the
// acceleration limit.
inline ComplianceReport complianceReport(const RobotSpec& spec, const Trajectory& tr) {
  ComplianceReport rep;
  for (std::size_t t = 0; t < tr.X.size(); ++t) {
    const JointState x = rowToState(tr.X[t]);
    const ViolationReport v =
        t < tr.U.size() ? checkLimits(spec, x, &tr.U[t]) : checkLimits(spec, x);
    ++rep.samples;
    rep.worstNormalized = std::max(rep.worstNormalized, v.worstNormalized);
    for (int i = 0; i < 6; ++i) {
      if (v.q[i]) {
        ++rep.positionViolations;
        break;
      }
    }
    for (int i = 0; i < 6; ++i) {
      if (v.qd[i]) {
        ++rep.velocityViolations;
        break;
      }
    }
    for (int i = 0; i < 6; ++i) {
      if (v.qdd[i]) {
        ++rep.accelerationViolations;
        break;
      }
    }
  }
  return rep;
}

}  // namespace mocu

#endif
