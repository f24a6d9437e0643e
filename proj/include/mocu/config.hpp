#ifndef MOCU_CONFIG_HPP
#define MOCU_CONFIG_HPP

// Run configuration shared by the command-line tools: a plain-text file with
// [section] headers and key = value lines covering the robot, dataset
// generation, training hyperparameters, the receding-horizon baseline, and
// benchmark settings. Defaults reproduce the full-scale training recipe;
// desk-scale runs override the handful of size knobs.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mocu {

struct RunConfig {
  // [robot]
  std::string robotName = "kr500";

  // [dataset]
  double duration = 20.0;          // open-loop excitation length, seconds
  double dt = 0.01;
  std::size_t repeats = 100;       // repetitions per excitation cell
  std::size_t np = 256;            // prediction-horizon window length
  std::size_t scenarios = 20;      // closed-loop reference count
  double scenarioDuration = 60.0;  // closed-loop reference length, seconds
  double omegaMax = 0.5;           // reference angular-velocity cap, rad/s
  double accelMax = 5.0;           // reference acceleration cap, m/s^2
  double feasibleScale = 0.25;     // excitation scale for recorded references
  double trainRatio = 0.7;
  double valRatio = 0.2;
  double testRatio = 0.1;

  // [training]
  std::vector<std::size_t> curriculum{32, 64, 128, 256};
  std::size_t plantEpochs = 500;
  std::size_t policyEpochs = 3000;
  std::size_t plantPatience = 150;
  std::size_t policyPatience = 500;
  std::size_t plateauEpochs = 100;
  double lrFactor = 0.5;
  double plantLr = 0.01;
  double policyLr = 0.001;
  double weightDecay = 0.01;
  std::size_t batchSize = 256;
  std::size_t controlHorizon = 32;
  std::size_t preview = 1;

  // [nmpc]
  std::size_t horizon = 32;
  std::size_t maxIters = 40;
  double gradTol = 1e-6;
  double penaltyWeight = 1000.0;
  double effortWeight = 0.1;
  double washoutWeight = 1.0;

  // [benchmark]
  std::size_t benchCalls = 1000;
  std::size_t benchWarmup = 10;
  std::size_t nmpcCalls = 10;  // full solves are slow; keep the sample small
};

namespace detail {

inline std::string trimmed(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parseNumber(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (end == value.c_str() || *end != '\0')
    throw std::invalid_argument("config: bad number for " + key + ": " + value);
  return v;
}

inline std::size_t parseCount(const std::string& key, const std::string& value) {
  const double v = parseNumber(key, value);
  if (v < 0.0 || v != double(std::size_t(v)))
    throw std::invalid_argument("config: " + key + " must be a nonnegative integer");
  return std::size_t(v);
}

inline std::vector<std::size_t> parseCountList(const std::string& key, const std::string& value) {
  std::string normalized = value;
  for (char& c : normalized)
    if (c == ',') c = ' ';
  std::istringstream in(normalized);
  std::vector<std::size_t> out;
  std::string tok;
  while (in >> tok) out.push_back(parseCount(key, tok));
  if (out.empty()) throw std::invalid_argument("config: empty list for " + key);
  return out;
}

inline std::string cfg17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// Applies one key from a section to the config. Unknown sections and keys
// are rejected so that typos in a config file fail loudly.
inline void applyConfigEntry(RunConfig& cfg, const std::string& section, const std::string& key,
                             const std::string& value) {
  using detail::parseCount;
  using detail::parseCountList;
  using detail::parseNumber;
  if (section == "robot") {
    if (key == "name") cfg.robotName = value;
    else throw std::invalid_argument("config: unknown key [robot] " + key);
  } else if (section == "dataset") {
    if (key == "duration") cfg.duration = parseNumber(key, value);
    else if (key == "dt") cfg.dt = parseNumber(key, value);
    else if (key == "repeats") cfg.repeats = parseCount(key, value);
    else if (key == "np") cfg.np = parseCount(key, value);
    else if (key == "scenarios") cfg.scenarios = parseCount(key, value);
    else if (key == "scenario_duration") cfg.scenarioDuration = parseNumber(key, value);
    else if (key == "omega_max") cfg.omegaMax = parseNumber(key, value);
    else if (key == "accel_max") cfg.accelMax = parseNumber(key, value);
    else if (key == "feasible_scale") cfg.feasibleScale = parseNumber(key, value);
    else if (key == "train_ratio") cfg.trainRatio = parseNumber(key, value);
    else if (key == "val_ratio") cfg.valRatio = parseNumber(key, value);
    else if (key == "test_ratio") cfg.testRatio = parseNumber(key, value);
    else throw std::invalid_argument("config: unknown key [dataset] " + key);
  } else if (section == "training") {
    if (key == "curriculum") cfg.curriculum = parseCountList(key, value);
    else if (key == "plant_epochs") cfg.plantEpochs = parseCount(key, value);
    else if (key == "policy_epochs") cfg.policyEpochs = parseCount(key, value);
    else if (key == "plant_patience") cfg.plantPatience = parseCount(key, value);
    else if (key == "policy_patience") cfg.policyPatience = parseCount(key, value);
    else if (key == "plateau_epochs") cfg.plateauEpochs = parseCount(key, value);
    else if (key == "lr_factor") cfg.lrFactor = parseNumber(key, value);
    else if (key == "plant_lr") cfg.plantLr = parseNumber(key, value);
    else if (key == "policy_lr") cfg.policyLr = parseNumber(key, value);
    else if (key == "weight_decay") cfg.weightDecay = parseNumber(key, value);
    else if (key == "batch_size") cfg.batchSize = parseCount(key, value);
    else if (key == "control_horizon") cfg.controlHorizon = parseCount(key, value);
    else if (key == "preview") cfg.preview = parseCount(key, value);
    else throw std::invalid_argument("config: unknown key [training] " + key);
  } else if (section == "nmpc") {
    if (key == "horizon") cfg.horizon = parseCount(key, value);
    else if (key == "max_iters") cfg.maxIters = parseCount(key, value);
    else if (key == "grad_tol") cfg.gradTol = parseNumber(key, value);
    else if (key == "penalty_weight") cfg.penaltyWeight = parseNumber(key, value);
    else if (key == "effort_weight") cfg.effortWeight = parseNumber(key, value);
    else if (key == "washout_weight") cfg.washoutWeight = parseNumber(key, value);
    else throw std::invalid_argument("config: unknown key [nmpc] " + key);
  } else if (section == "benchmark") {
    if (key == "calls") cfg.benchCalls = parseCount(key, value);
    else if (key == "warmup") cfg.benchWarmup = parseCount(key, value);
    else if (key == "nmpc_calls") cfg.nmpcCalls = parseCount(key, value);
    else throw std::invalid_argument("config: unknown key [benchmark] " + key);
  } else {
    throw std::invalid_argument("config: unknown section [" + section + "]");
  }
}

inline RunConfig parseRunConfig(std::istream& in) {
  RunConfig cfg;
  std::string line, section;
  std::size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    const std::string t = detail::trimmed(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw std::invalid_argument("config: malformed section at line " + std::to_string(lineNo));
      section = detail::trimmed(t.substr(1, t.size() - 2));
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: expected key = value at line " + std::to_string(lineNo));
    const std::string key = detail::trimmed(t.substr(0, eq));
    const std::string value = detail::trimmed(t.substr(eq + 1));
    if (key.empty()) throw std::invalid_argument("config: empty key at line " + std::to_string(lineNo));
    if (section.empty())
      throw std::invalid_argument("config: key before any [section] at line " + std::to_string(lineNo));
    applyConfigEntry(cfg, section, key, value);
  }
  return cfg;
}

inline RunConfig loadRunConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  return parseRunConfig(in);
}

// Writes every setting, defaults included, so a saved file doubles as a
// template listing the full key set.
inline void saveRunConfig(const RunConfig& cfg, std::ostream& out) {
  using detail::cfg17;
  out << "[robot]\n";
  out << "name = " << cfg.robotName << "\n\n";
  out << "[dataset]\n";
  out << "duration = " << cfg17(cfg.duration) << "\n";
  out << "dt = " << cfg17(cfg.dt) << "\n";
  out << "repeats = " << cfg.repeats << "\n";
  out << "np = " << cfg.np << "\n";
  out << "scenarios = " << cfg.scenarios << "\n";
  out << "scenario_duration = " << cfg17(cfg.scenarioDuration) << "\n";
  out << "omega_max = " << cfg17(cfg.omegaMax) << "\n";
  out << "accel_max = " << cfg17(cfg.accelMax) << "\n";
  out << "feasible_scale = " << cfg17(cfg.feasibleScale) << "\n";
  out << "train_ratio = " << cfg17(cfg.trainRatio) << "\n";
  out << "val_ratio = " << cfg17(cfg.valRatio) << "\n";
  out << "test_ratio = " << cfg17(cfg.testRatio) << "\n\n";
  out << "[training]\n";
  out << "curriculum =";
  for (std::size_t n : cfg.curriculum) out << " " << n;
  out << "\n";
  out << "plant_epochs = " << cfg.plantEpochs << "\n";
  out << "policy_epochs = " << cfg.policyEpochs << "\n";
  out << "plant_patience = " << cfg.plantPatience << "\n";
  out << "policy_patience = " << cfg.policyPatience << "\n";
  out << "plateau_epochs = " << cfg.plateauEpochs << "\n";
  out << "lr_factor = " << cfg17(cfg.lrFactor) << "\n";
  out << "plant_lr = " << cfg17(cfg.plantLr) << "\n";
  out << "policy_lr = " << cfg17(cfg.policyLr) << "\n";
  out << "weight_decay = " << cfg17(cfg.weightDecay) << "\n";
  out << "batch_size = " << cfg.batchSize << "\n";
  out << "control_horizon = " << cfg.controlHorizon << "\n";
  out << "preview = " << cfg.preview << "\n\n";
  out << "[nmpc]\n";
  out << "horizon = " << cfg.horizon << "\n";
  out << "max_iters = " << cfg.maxIters << "\n";
  out << "grad_tol = " << cfg17(cfg.gradTol) << "\n";
  out << "penalty_weight = " << cfg17(cfg.penaltyWeight) << "\n";
  out << "effort_weight = " << cfg17(cfg.effortWeight) << "\n";
  out << "washout_weight = " << cfg17(cfg.washoutWeight) << "\n\n";
  out << "[benchmark]\n";
  out << "calls = " << cfg.benchCalls << "\n";
  out << "warmup = " << cfg.benchWarmup << "\n";
  out << "nmpc_calls = " << cfg.nmpcCalls << "\n";
}

inline void saveRunConfig(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("config: cannot write " + path);
  saveRunConfig(cfg, out);
}

}  // namespace mocu

#endif
