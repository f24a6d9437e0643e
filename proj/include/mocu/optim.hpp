#ifndef MOCU_OPTIM_HPP
#define MOCU_OPTIM_HPP

// Rectified Adam with decoupled weight decay, plus the plateau/early-stop
// schedule used by every training loop.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace mocu {

struct OptimizerState {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weightDecay = 0.01;  // decoupled: scales params, not gradients
  long step = 0;
  std::vector<double> m, v;
};

inline void radamStep(OptimizerState& o, std::vector<double>& p, const std::vector<double>& g) {
  if (o.m.empty()) {
    o.m.assign(p.size(), 0.0);
    o.v.assign(p.size(), 0.0);
  }
  if (p.size() != g.size() || p.size() != o.m.size())
    throw std::invalid_argument("radamStep: size mismatch");
  ++o.step;
  const double t = double(o.step);
  if (o.weightDecay != 0.0)
    for (double& w : p) w -= o.lr * o.weightDecay * w;
  const double b1t = std::pow(o.beta1, t);
  const double b2t = std::pow(o.beta2, t);
  const double rhoInf = 2.0 / (1.0 - o.beta2) - 1.0;
  const double rho = rhoInf - 2.0 * t * b2t / (1.0 - b2t);
  const bool rectified = rho > 4.0;
  double rect = 0.0;
  if (rectified)
    rect = std::sqrt(((rho - 4.0) * (rho - 2.0) * rhoInf) /
                     ((rhoInf - 4.0) * (rhoInf - 2.0) * rho));
  for (std::size_t i = 0; i < p.size(); ++i) {
    o.m[i] = o.beta1 * o.m[i] + (1.0 - o.beta1) * g[i];
    o.v[i] = o.beta2 * o.v[i] + (1.0 - o.beta2) * g[i] * g[i];
    const double mhat = o.m[i] / (1.0 - b1t);
    if (rectified) {
      const double vhat = std::sqrt(o.v[i] / (1.0 - b2t));
      p[i] -= o.lr * rect * mhat / (vhat + o.eps);
    } else {
      p[i] -= o.lr * mhat;
    }
  }
}

struct ScheduleState {
  double factor = 0.5;      // learning rate multiplier on plateau
  int plateauEpochs = 100;  // training-loss stagnation window
  int patience = 150;       // validation stagnation before stopping
  double bestTrain = std::numeric_limits<double>::infinity();
  int trainStagnant = 0;
  double bestVal = std::numeric_limits<double>::infinity();
  int valStagnant = 0;
};

struct ScheduleAction {
  bool reduceLR = false;
  bool stop = false;
};

// Call once per epoch. Strict improvement resets the counters; the LR drops
// once the training loss has gone plateauEpochs epochs without improving, and
// stop fires after patience epochs without validation improvement.
inline ScheduleAction schedulerUpdate(ScheduleState& s, OptimizerState& o, double trainLoss,
                                      double valLoss) {
  ScheduleAction a;
  if (trainLoss < s.bestTrain) {
    s.bestTrain = trainLoss;
    s.trainStagnant = 0;
  } else if (++s.trainStagnant >= s.plateauEpochs) {
    o.lr *= s.factor;
    s.trainStagnant = 0;
    a.reduceLR = true;
  }
  if (valLoss < s.bestVal) {
    s.bestVal = valLoss;
    s.valStagnant = 0;
  } else if (++s.valStagnant >= s.patience) {
    a.stop = true;
  }
  return a;
}

}  // namespace mocu

#endif
