// Command line front end for the motion-cueing toolkit: dataset generation,
// surrogate and policy training, evaluation, benchmarking, and closed-loop
// simulation. Artifacts are plain-text files (datasets, checkpoints, CSVs);
// every floating-point value is printed with 17 significant digits so runs
// can be compared byte for byte.
//
// Exit codes: 0 on success, 1 on a validation error (bad flags, bad config,
// inconsistent inputs), 2 on a runtime failure (IO, checksum, divergence).

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mocu/config.hpp"
#include "mocu/datagen.hpp"
#include "mocu/kinematics.hpp"
#include "mocu/metrics.hpp"
#include "mocu/nmpc.hpp"
#include "mocu/policy.hpp"
#include "mocu/surrogates.hpp"

namespace {

using namespace mocu;

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s = buf;
  // keep a decimal marker so values read back as floating point
  if (s.find_first_of(".einf") == std::string::npos) s += ".0";
  return s;
}

// global flags shared by every subcommand
struct Global {
  std::string configPath;
  std::uint64_t seed = 1;
  std::string outDir = "out";

  RunConfig config() const {
    return configPath.empty() ? RunConfig{} : loadRunConfig(configPath);
  }
  std::filesystem::path outPath() const {
    std::filesystem::create_directories(outDir);
    return outDir;
  }
};

NmpcConfig nmpcFromConfig(const RunConfig& cfg) {
  NmpcConfig n;
  n.horizon = int(cfg.horizon);
  n.dt = cfg.dt;
  n.maxIters = int(cfg.maxIters);
  n.gradTol = cfg.gradTol;
  n.penaltyWeight = cfg.penaltyWeight;
  n.effortWeight = cfg.effortWeight;
  n.washoutWeight = cfg.washoutWeight;
  return n;
}

TrainConfig plantTrainConfig(const RunConfig& cfg, std::uint64_t seed) {
  TrainConfig tc;
  tc.curriculum.assign(cfg.curriculum.begin(), cfg.curriculum.end());
  tc.maxEpochs = int(cfg.plantEpochs);
  tc.patience = int(cfg.plantPatience);
  tc.plateauEpochs = int(cfg.plateauEpochs);
  tc.lrFactor = cfg.lrFactor;
  tc.lr = cfg.plantLr;
  tc.weightDecay = cfg.weightDecay;
  tc.batchSize = int(cfg.batchSize);
  tc.seed = seed;
  return tc;
}

StateKind parseStateKind(const std::string& s) {
  if (s == "nssm") return StateKind::Nssm;
  if (s == "node1") return StateKind::Node1;
  if (s == "node2") return StateKind::Node2;
  throw std::invalid_argument("unknown state model: " + s);
}

OutputKind parseOutputKind(const std::string& s) {
  if (s == "nssm") return OutputKind::Nssm;
  if (s == "latent") return OutputKind::Latent;
  if (s == "mixed") return OutputKind::Mixed;
  throw std::invalid_argument("unknown output model: " + s);
}

// Reads recorded output channels from either file layout: a full trajectory
// csv (25 columns, padding row dropped) or a reference csv (7 columns).
std::vector<std::array<double, 6>> loadOutputChannels(const std::string& path, double dt) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string header;
  std::getline(f, header);
  const std::size_t cols = std::count(header.begin(), header.end(), ',') + 1;
  f.close();
  if (cols == 25) return loadTrajectoryCsv(path, dt).Y;
  if (cols == 7) return loadReferenceCsv(path).channels;
  throw std::invalid_argument(path + ": expected a trajectory (25 cols) or reference (7 cols) csv");
}

// scenario generator shared by datagen, compare, and synth-ref; `stream`
// separates the counter domains of the different subcommands
ReferenceScenario makeScenario(const RobotSpec& spec, const RunConfig& cfg, std::uint64_t seed,
                               std::size_t index, bool feasible, std::uint64_t stream) {
  Rng rng(seed, stream + index);
  return feasible
             ? feasibleReference(spec, rng, cfg.scenarioDuration, cfg.dt, cfg.feasibleScale)
             : synthReference(rng, cfg.scenarioDuration, cfg.dt, cfg.omegaMax, cfg.accelMax);
}

// absolute tracking targets for a scenario: rest output plus the stored deviations
std::vector<std::array<double, 6>> absoluteRefs(const RobotSpec& spec,
                                                const ReferenceScenario& sc) {
  const std::array<double, 6> rest = restOutput(spec);
  std::vector<std::array<double, 6>> refs = sc.channels;
  for (auto& r : refs)
    for (int k = 0; k < 6; ++k) r[k] += rest[k];
  return refs;
}

void printCompliance(const ComplianceReport& rep) {
  std::cout << "samples " << rep.samples << "\n"
            << "position_violations " << rep.positionViolations << "\n"
            << "velocity_violations " << rep.velocityViolations << "\n"
            << "acceleration_violations " << rep.accelerationViolations << "\n"
            << "worst_normalized " << g17(rep.worstNormalized) << "\n"
            << "clean " << (rep.clean() ? "yes" : "no") << "\n";
}

void printBench(const std::string& label, const BenchmarkResult& r) {
  std::cout << label << " calls " << r.samplesUs.size() << "\n"
            << label << " mean_us " << g17(r.meanUs) << "\n"
            << label << " median_us " << g17(r.medianUs) << "\n"
            << label << " min_us " << g17(r.minUs) << "\n"
            << label << " max_us " << g17(r.maxUs) << "\n";
}

int runOpenLoop(const Global& gl, const RunConfig& cfg) {
  const RobotSpec spec = kr500Spec();
  OpenLoopParams p;
  p.duration = cfg.duration;
  p.dt = cfg.dt;
  p.repeats = int(cfg.repeats);
  p.np = int(cfg.np);
  const Dataset ds = openLoopDataset(spec, p, gl.seed);
  saveDataset(ds, gl.outPath());
  std::cout << "open-loop dataset: " << ds.trajectories.size() << " windows of " << ds.np
            << " steps at dt " << g17(ds.dt) << " -> " << gl.outDir << "\n";
  return 0;
}

int runClosedLoop(const Global& gl, const RunConfig& cfg, bool feasible) {
  const RobotSpec spec = kr500Spec();
  std::vector<ReferenceScenario> scenarios;
  for (std::size_t i = 0; i < cfg.scenarios; ++i)
    scenarios.push_back(makeScenario(spec, cfg, gl.seed, i, feasible, 1000));
  int failures = 0;
  const Dataset ds =
      closedLoopDataset(spec, nmpcFromConfig(cfg), scenarios, int(cfg.np), gl.seed, &failures);
  saveDataset(ds, gl.outPath());
  std::cout << "closed-loop dataset: " << ds.trajectories.size() << " windows of " << ds.np
            << " steps from " << scenarios.size() << " scenarios (" << failures
            << " solver failures) -> " << gl.outDir << "\n";
  return 0;
}

int runSynthRef(const Global& gl, const RunConfig& cfg, std::size_t count, bool feasible) {
  const RobotSpec spec = kr500Spec();
  const std::filesystem::path dir = gl.outPath();
  for (std::size_t i = 0; i < count; ++i) {
    const ReferenceScenario sc = makeScenario(spec, cfg, gl.seed, i, feasible, 1000);
    char name[32];
    std::snprintf(name, sizeof name, "ref_%03zu.csv", i);
    saveReferenceCsv(sc, dir / name);
    std::cout << "wrote " << (dir / name).string() << " (" << sc.channels.size() << " rows)\n";
  }
  return 0;
}

int runTrainPlant(const Global& gl, const RunConfig& cfg, const std::string& stateName,
                  const std::string& outputName, const std::string& dataDir) {
  const RobotSpec spec = kr500Spec();
  const Dataset ds = loadDataset(dataDir);
  SplitSpec sp;
  sp.train = cfg.trainRatio;
  sp.val = cfg.valRatio;
  sp.test = cfg.testRatio;
  sp.shuffleSeed = gl.seed;
  const DatasetSplit split = splitDataset(ds, sp);
  if (split.train.trajectories.empty() || split.val.trajectories.empty())
    throw std::invalid_argument("dataset too small to split into train and validation parts");

  PlantSurrogate s =
      makeSurrogate(spec, parseStateKind(stateName), parseOutputKind(outputName), gl.seed);
  const TrainConfig tc = plantTrainConfig(cfg, gl.seed);
  const TrainReport stateRep =
      trainStateModel(s.state, split.train.trajectories, split.val.trajectories, tc);
  const TrainReport outRep = trainOutputModel(s.output, s.state, spec, split.train.trajectories,
                                              split.val.trajectories, tc);

  const std::filesystem::path ckpt = gl.outPath() / "surrogate.ckpt";
  saveCheckpoint(ckpt.string(), surrogateCheckpoint(s, gl.seed));
  std::cout << "state " << stateName << " best_val " << g17(stateRep.bestVal) << " epochs "
            << stateRep.trainLoss.size() << "\n";
  std::cout << "output " << outputName << " best_val " << g17(outRep.bestVal) << " epochs "
            << outRep.trainLoss.size() << "\n";
  if (!split.test.trajectories.empty()) {
    const int np = int(tc.curriculum.back());
    const auto testChunks = segmentTrajectories(split.test.trajectories, np);
    std::cout << "test state_rollout_rmse " << g17(stateRolloutRmse(s.state, testChunks)) << "\n";
    std::cout << "test output_rollout_rmse " << g17(outputRolloutRmse(s, testChunks)) << "\n";
  }
  std::cout << "wrote " << ckpt.string() << "\n";
  return 0;
}

int runTrainPolicy(const Global& gl, const RunConfig& cfg, const std::string& surrogatePath,
                   const std::string& dataDir) {
  const RobotSpec spec = kr500Spec();
  const PlantSurrogate s = loadSurrogate(surrogatePath, spec);
  const Dataset ds = loadDataset(dataDir);
  SplitSpec sp;
  sp.train = cfg.trainRatio;
  sp.val = cfg.valRatio;
  sp.test = cfg.testRatio;
  sp.shuffleSeed = gl.seed;
  const DatasetSplit split = splitDataset(ds, sp);

  Policy p = makePolicy(spec, gl.seed, int(cfg.preview));
  PolicyTrainConfig pc;
  pc.nc = int(cfg.controlHorizon);
  pc.maxEpochs = int(cfg.policyEpochs);
  pc.patience = int(cfg.policyPatience);
  pc.plateauEpochs = int(cfg.plateauEpochs);
  pc.lrFactor = cfg.lrFactor;
  pc.lr = cfg.policyLr;
  pc.weightDecay = cfg.weightDecay;
  pc.batchSize = int(cfg.batchSize);
  pc.seed = gl.seed;
  if (ds.np < int(pc.nc) + p.preview - 1)
    throw std::invalid_argument("dataset windows are shorter than the control horizon");
  const TrainReport rep =
      trainPolicy(p, s, split.train.trajectories, split.val.trajectories, pc);

  const std::filesystem::path ckpt = gl.outPath() / "policy.ckpt";
  saveCheckpoint(ckpt.string(), policyCheckpoint(p, gl.seed));
  std::cout << "policy best_val " << g17(rep.bestVal) << " epochs " << rep.trainLoss.size()
            << " skipped_batches " << rep.skippedBatches << "\n";
  std::cout << "wrote " << ckpt.string() << "\n";
  return 0;
}

int runEvalPi(const RunConfig& cfg, const std::string& simPath, const std::string& refPath,
              bool literal) {
  const auto sim = loadOutputChannels(simPath, cfg.dt);
  const auto ref = loadOutputChannels(refPath, cfg.dt);
  if (sim.size() != ref.size())
    throw std::invalid_argument("pi: row counts differ (" + std::to_string(sim.size()) + " vs " +
                                std::to_string(ref.size()) + ")");
  const double pi =
      performanceIndex(sim, ref, literal ? PiNorm::LiteralSqrtK : PiNorm::Rmse);
  std::cout << g17(pi) << "\n";
  return 0;
}

int runEvalCompliance(const RunConfig& cfg, const std::string& trajPath) {
  const RobotSpec spec = kr500Spec();
  const Trajectory tr = loadTrajectoryCsv(trajPath, cfg.dt);
  printCompliance(complianceReport(spec, tr));
  return 0;
}

int runBenchPolicy(const Global& gl, const RunConfig& cfg, const std::string& policyPath) {
  const RobotSpec spec = kr500Spec();
  const Policy p = loadPolicy(policyPath, spec);
  Rng rng(gl.seed, 90);
  struct Sample {
    std::array<double, 6> y;
    std::array<double, 12> x;
    std::vector<std::array<double, 6>> refs;
  };
  std::vector<Sample> samples(64);
  for (Sample& s : samples) {
    const JointState st = randomValidState(spec, rng);
    s.x = stateToRow(st);
    s.y = plantOutputT<double>(spec, st.q, st.qd, std::array<double, 6>{});
    s.refs.assign(p.preview, restOutput(spec));
  }
  std::size_t i = 0;
  volatile double sink = 0.0;
  const BenchmarkResult r = benchmark(
      [&] {
        const PolicyAction a = policyForward(p, samples[i].y, samples[i].x, samples[i].refs);
        sink = sink + a.u[0];
        i = (i + 1) % samples.size();
      },
      int(cfg.benchCalls), int(cfg.benchWarmup));
  printBench("policy", r);
  return 0;
}

int runBenchPlant(const Global& gl, const RunConfig& cfg) {
  const RobotSpec spec = kr500Spec();
  Rng rng(gl.seed, 91);
  std::vector<JointState> states(64);
  std::vector<JointAccel> accels(64);
  for (std::size_t k = 0; k < states.size(); ++k) {
    states[k] = randomValidState(spec, rng);
    for (int j = 0; j < 6; ++j)
      accels[k][j] = rng.uniform(-spec.qddMax[j], spec.qddMax[j]);
  }
  std::size_t i = 0;
  volatile double sink = 0.0;
  const BenchmarkResult r = benchmark(
      [&] {
        const auto y = plantOutputT<double>(spec, states[i].q, states[i].qd, accels[i]);
        sink = sink + y[0];
        i = (i + 1) % states.size();
      },
      int(cfg.benchCalls), int(cfg.benchWarmup));
  printBench("plant", r);
  return 0;
}

int runBenchNmpc(const Global& gl, const RunConfig& cfg) {
  const RobotSpec spec = kr500Spec();
  const NmpcConfig nc = nmpcFromConfig(cfg);
  Rng rng(gl.seed, 92);
  std::vector<std::array<double, 12>> states(std::max<std::size_t>(cfg.nmpcCalls, 1));
  for (auto& x : states) x = stateToRow(randomValidState(spec, rng));
  const std::array<double, 6> ref = restOutput(spec);
  std::size_t i = 0;
  volatile double sink = 0.0;
  const BenchmarkResult r = benchmark(
      [&] {
        const NmpcSolution sol = nmpcSolve(spec, nc, states[i], ref);
        sink = sink + sol.cost;
        i = (i + 1) % states.size();
      },
      int(cfg.nmpcCalls), 1);
  printBench("nmpc", r);
  return 0;
}

int runCompare(const Global& gl, const RunConfig& cfg, const std::string& policyPath,
               bool feasible) {
  const RobotSpec spec = kr500Spec();
  const Policy p = loadPolicy(policyPath, spec);
  const NmpcConfig nc = nmpcFromConfig(cfg);
  if (cfg.scenarios < 3)
    throw std::invalid_argument("compare: need at least 3 scenarios for the rank-sum test");

  std::vector<double> dpcPi, nmpcPi;
  double dpcSeconds = 0.0, nmpcSeconds = 0.0;
  std::size_t dpcSteps = 0, nmpcSteps = 0;
  for (std::size_t i = 0; i < cfg.scenarios; ++i) {
    const ReferenceScenario sc = makeScenario(spec, cfg, gl.seed, i, feasible, 2000);
    const auto refs = absoluteRefs(spec, sc);
    const std::array<double, 12> x0{};

    const auto t0 = std::chrono::steady_clock::now();
    const Trajectory dpcTraj = policyPlantRollout(spec, p, x0, refs, cfg.dt);
    const auto t1 = std::chrono::steady_clock::now();
    dpcSeconds += std::chrono::duration<double>(t1 - t0).count();
    dpcSteps += dpcTraj.steps();

    const ClosedLoopResult base = nmpcClosedLoop(spec, nc, x0, refs);
    for (double s : base.solveSeconds) nmpcSeconds += s;
    nmpcSteps += base.traj.steps();

    const std::vector<std::array<double, 6>> refDpc(refs.begin(),
                                                    refs.begin() + dpcTraj.steps());
    const std::vector<std::array<double, 6>> refBase(refs.begin(),
                                                     refs.begin() + base.traj.steps());
    dpcPi.push_back(performanceIndex(dpcTraj.Y, refDpc));
    nmpcPi.push_back(performanceIndex(base.traj.Y, refBase));
    std::cout << "scenario " << i << " dpc_pi " << g17(dpcPi.back()) << " nmpc_pi "
              << g17(nmpcPi.back()) << "\n";
  }

  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  const RankSumResult w = wilcoxonRankSum(dpcPi, nmpcPi);
  const double perDpc = dpcSeconds / double(dpcSteps);
  const double perNmpc = nmpcSeconds / double(nmpcSteps);
  std::cout << "dpc_median_pi " << g17(median(dpcPi)) << "\n"
            << "nmpc_median_pi " << g17(median(nmpcPi)) << "\n"
            << "wilcoxon_statistic " << g17(w.statistic) << "\n"
            << "wilcoxon_p " << g17(w.p) << (w.exact ? " exact" : " approx") << "\n"
            << "dpc_step_seconds " << g17(perDpc) << "\n"
            << "nmpc_step_seconds " << g17(perNmpc) << "\n"
            << "speed_ratio " << g17(perNmpc / perDpc) << "\n";
  return 0;
}

int runSimulate(const Global& gl, const RunConfig& cfg, const std::string& policyPath,
                const std::string& scenarioPath, std::string outFile) {
  const RobotSpec spec = kr500Spec();
  const Policy p = loadPolicy(policyPath, spec);
  const ReferenceScenario sc = loadReferenceCsv(scenarioPath);
  const auto refs = absoluteRefs(spec, sc);
  const Trajectory tr = policyPlantRollout(spec, p, {}, refs, sc.dt);
  if (outFile.empty()) outFile = (gl.outPath() / "sim.csv").string();
  saveTrajectoryCsv(tr, outFile);
  const std::vector<std::array<double, 6>> used(refs.begin(), refs.begin() + tr.steps());
  std::cout << "pi " << g17(performanceIndex(tr.Y, used)) << "\n";
  printCompliance(complianceReport(spec, tr));
  std::cout << "wrote " << outFile << "\n";
  return 0;
}

// One observation in, one action out, through stdin/stdout: 6 output values,
// 12 state values, then 6 reference values per preview step. The reply is 18
// numbers: the saturated controls, then the predicted positions and
// velocities of the next state.
int runPolicyStep(const RunConfig& cfg, const std::string& policyPath) {
  (void)cfg;
  const RobotSpec spec = kr500Spec();
  const Policy p = loadPolicy(policyPath, spec);
  std::vector<double> in;
  double v;
  while (std::cin >> v) in.push_back(v);
  const std::size_t expect = 18 + 6 * std::size_t(p.preview);
  if (in.size() != expect)
    throw std::invalid_argument("policy-step: expected " + std::to_string(expect) +
                                " numbers, got " + std::to_string(in.size()));
  std::array<double, 6> y;
  std::array<double, 12> x;
  for (int k = 0; k < 6; ++k) y[k] = in[k];
  for (int k = 0; k < 12; ++k) x[k] = in[6 + k];
  std::vector<std::array<double, 6>> refs(p.preview);
  for (int t = 0; t < p.preview; ++t)
    for (int k = 0; k < 6; ++k) refs[t][k] = in[18 + 6 * t + k];
  const PolicyAction act = policyForward(p, y, x, refs);
  for (double u : act.u) std::cout << g17(u) << "\n";
  for (double s : act.xhat) std::cout << g17(s) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"motion cueing toolkit: kinematic plant, learned surrogates, "
               "predictive-control policies"};
  app.require_subcommand(1);
  app.fallthrough();  // let --config/--seed/--out appear after the subcommand

  Global gl;
  app.add_option("--config", gl.configPath, "run configuration file");
  app.add_option("--seed", gl.seed, "master seed (default 1)");
  app.add_option("--out", gl.outDir, "output directory (default ./out)");

  // flag-level overrides of the most common config knobs
  double durationFlag = 0.0, scenarioDurFlag = 0.0;
  std::size_t repeatsFlag = 0, npFlag = 0, scenariosFlag = 0, countFlag = 1;

  bool feasibleFlag = false;
  CLI::App* dg = app.add_subcommand("datagen", "generate datasets and references");
  dg->require_subcommand(1);
  CLI::App* dgOpen = dg->add_subcommand("open-loop", "excitation sweep through the exact plant");
  auto* optDur = dgOpen->add_option("--duration", durationFlag, "seconds per simulation");
  auto* optRep = dgOpen->add_option("--repeats", repeatsFlag, "repetitions per excitation cell");
  auto* optNp = dgOpen->add_option("--np", npFlag, "window length in steps");
  CLI::App* dgClosed =
      dg->add_subcommand("closed-loop", "receding-horizon tracking of synthetic references");
  auto* optScen = dgClosed->add_option("--scenarios", scenariosFlag, "reference count");
  auto* optSdur = dgClosed->add_option("--duration", scenarioDurFlag, "seconds per scenario");
  auto* optNp2 = dgClosed->add_option("--np", npFlag, "window length in steps");
  dgClosed->add_flag("--feasible", feasibleFlag, "record references from compliant plant motion");
  CLI::App* dgRef = dg->add_subcommand("synth-ref", "write synthetic reference csv files");
  dgRef->add_option("--count", countFlag, "number of reference files");
  auto* optSdur2 = dgRef->add_option("--duration", scenarioDurFlag, "seconds per reference");
  dgRef->add_flag("--feasible", feasibleFlag, "record references from compliant plant motion");

  std::string stateName = "node2", outputName = "mixed", dataDir, valDir;
  std::string surrogatePath, policyPath, simPath, refPath, trajPath, scenarioPath, outFile;
  bool piLiteral = false;

  CLI::App* tr = app.add_subcommand("train", "fit surrogate plants and policies");
  tr->require_subcommand(1);
  CLI::App* trPlant = tr->add_subcommand("plant", "state + output model from a dataset");
  trPlant->add_option("--state", stateName, "state model: nssm | node1 | node2")
      ->check(CLI::IsMember({"nssm", "node1", "node2"}));
  trPlant->add_option("--output", outputName, "output model: nssm | latent | mixed")
      ->check(CLI::IsMember({"nssm", "latent", "mixed"}));
  trPlant->add_option("--data", dataDir, "dataset directory")->required();
  CLI::App* trPolicy = tr->add_subcommand("policy", "imitation policy through a frozen surrogate");
  trPolicy->add_option("--surrogate", surrogatePath, "surrogate checkpoint")->required();
  trPolicy->add_option("--data", dataDir, "dataset directory")->required();

  CLI::App* ev = app.add_subcommand("eval", "score recorded trajectories");
  ev->require_subcommand(1);
  CLI::App* evPi = ev->add_subcommand("pi", "performance index between two recordings");
  evPi->add_option("--sim", simPath, "simulated csv (trajectory or reference layout)")->required();
  evPi->add_option("--ref", refPath, "reference csv (trajectory or reference layout)")->required();
  evPi->add_flag("--pi-literal", piLiteral, "divide channel error by sqrt(channel index)");
  CLI::App* evComp = ev->add_subcommand("compliance", "joint-limit report for a trajectory csv");
  evComp->add_option("--traj", trajPath, "trajectory csv")->required();

  CLI::App* be = app.add_subcommand("bench", "wall-clock timing");
  be->require_subcommand(1);
  CLI::App* bePolicy = be->add_subcommand("policy", "policy inference latency");
  bePolicy->add_option("--policy", policyPath, "policy checkpoint")->required();
  be->add_subcommand("plant", "exact plant output latency");
  be->add_subcommand("nmpc", "full receding-horizon solve latency");

  CLI::App* cmp = app.add_subcommand("compare", "head-to-head studies");
  cmp->require_subcommand(1);
  CLI::App* cmpDpc =
      cmp->add_subcommand("dpc-vs-nmpc", "policy vs optimizing baseline over fresh scenarios");
  cmpDpc->add_option("--policy", policyPath, "policy checkpoint")->required();
  auto* optScen2 = cmpDpc->add_option("--scenarios", scenariosFlag, "scenario count");
  auto* optSdur3 = cmpDpc->add_option("--duration", scenarioDurFlag, "seconds per scenario");
  cmpDpc->add_flag("--feasible", feasibleFlag, "record references from compliant plant motion");

  CLI::App* sim = app.add_subcommand("simulate", "closed-loop run over a scenario file");
  sim->add_option("--policy", policyPath, "policy checkpoint")->required();
  sim->add_option("--scenario", scenarioPath, "reference csv of deviations")->required();
  sim->add_option("--traj-out", outFile, "output trajectory csv (default <out>/sim.csv)");

  CLI::App* pstep = app.add_subcommand("policy-step", "one action from stdin numbers");
  pstep->add_option("--policy", policyPath, "policy checkpoint")->required();

  try {
    app.parse(argc, argv);

    RunConfig cfg = gl.config();
    if (optDur->count() || optSdur->count() || optSdur2->count() || optSdur3->count()) {
      if (optDur->count()) cfg.duration = durationFlag;
      else cfg.scenarioDuration = scenarioDurFlag;
    }
    if (optRep->count()) cfg.repeats = repeatsFlag;
    if (optNp->count() || optNp2->count()) cfg.np = npFlag;
    if (optScen->count() || optScen2->count()) cfg.scenarios = scenariosFlag;

    if (dgOpen->parsed()) return runOpenLoop(gl, cfg);
    if (dgClosed->parsed()) return runClosedLoop(gl, cfg, feasibleFlag);
    if (dgRef->parsed()) return runSynthRef(gl, cfg, countFlag, feasibleFlag);
    if (trPlant->parsed()) return runTrainPlant(gl, cfg, stateName, outputName, dataDir);
    if (trPolicy->parsed()) return runTrainPolicy(gl, cfg, surrogatePath, dataDir);
    if (evPi->parsed()) return runEvalPi(cfg, simPath, refPath, piLiteral);
    if (evComp->parsed()) return runEvalCompliance(cfg, trajPath);
    if (bePolicy->parsed()) return runBenchPolicy(gl, cfg, policyPath);
    if (be->got_subcommand("plant")) return runBenchPlant(gl, cfg);
    if (be->got_subcommand("nmpc")) return runBenchNmpc(gl, cfg);
    if (cmpDpc->parsed()) return runCompare(gl, cfg, policyPath, feasibleFlag);
    if (sim->parsed()) return runSimulate(gl, cfg, policyPath, scenarioPath, outFile);
    if (pstep->parsed()) return runPolicyStep(cfg, policyPath);
    std::cerr << app.help();
    return 1;
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  }
}
