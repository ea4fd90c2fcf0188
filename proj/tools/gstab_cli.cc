// gstab: data collection, training, stabilized runs and the comparison
// matrix for the simulated tendon-driven hand.
//
// Exit status: 0 success, 1 runtime failure, 2 usage error. Failures print
// one line "error: <kind>: <message>" on stderr.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gstab/config_file.h"
#include "gstab/evaluation.h"
#include "gstab/hand_sim.h"
#include "gstab/network.h"
#include "gstab/search.h"
#include "gstab/stabilizer.h"

namespace {

using namespace gstab;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

SimConfig LoadSim(const std::string& path) {
  return path.empty() ? SimConfig{} : SimConfig::FromFile(path);
}

long DurationTicks(double seconds) {
  if (!(seconds > 0.0)) throw UsageError("--duration must be positive");
  return std::lround(seconds * kControlRateHz);
}

std::string FormatDrop(const TrialSummary& s) {
  if (s.success) return "ok";
  std::ostringstream os;
  os << "dropped at " << s.drop_time << " s";
  return os.str();
}

void PrintCheckpoints(const TrialSummary& s) {
  for (std::size_t i = 0; i < s.checkpoints.size(); ++i) {
    std::cout << " ma" << kCheckpoints[i] << '=' << s.checkpoints[i];
  }
}

struct CollectArgs {
  std::string mode = "variable";
  double duration = 180.0;
  std::string scenario = "quiet";
  std::uint64_t seed = 1;
  std::string config;
  std::string out;
};

int RunCollect(const CollectArgs& a) {
  SimConfig sim_cfg = LoadSim(a.config);
  SearchConfig sc;
  sc.mode = ParseSearchMode(a.mode);
  sc.duration_ticks = static_cast<int>(DurationTicks(a.duration));
  sc.seed = a.seed;
  sc.Validate();
  HandSim sim(sim_cfg, a.seed);
  DisturbanceSchedule sched =
      MakeScenario(ParseScenario(a.scenario), a.seed, a.duration, sim_cfg);
  CollectionLog log = Collect(sim, sc, sched);
  WriteLogCsv(log, a.out);
  std::cout << "records " << log.records.size()
            << (log.truncated ? " (truncated: tool dropped)" : "") << '\n';
  return 0;
}

struct TrainArgs {
  std::string data;
  int epochs = 300;
  int batch = 10;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  std::string config;  // accepted for symmetry; training has no physics
  std::string out;
  std::string curve;
};

int RunTrain(const TrainArgs& a) {
  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch;
  tc.learning_rate = a.lr;
  tc.seed = a.seed;
  CollectionLog log = ReadLogCsv(a.data);
  TrainingRun run = TrainOnLog(log, tc);
  run.model.Save(a.out, tc);
  std::string curve = a.curve.empty() ? a.out + ".loss.csv" : a.curve;
  WriteLossCurveCsv(run.curve, curve);
  std::cout << "pairs " << run.train_pairs << '/' << run.test_pairs
            << " test loss " << run.curve.front().test << " -> "
            << run.curve.back().test << '\n';
  return 0;
}

struct StabilizeArgs {
  std::string model;
  std::string condition;
  std::string scenario = "hammer";
  double duration = 60.0;
  std::uint64_t seed = 1;
  std::string config;
  std::string out;
  std::string diag;
  bool wall_time = false;
};

int RunStabilize(const StabilizeArgs& a) {
  bool hold = a.condition == "none";
  if (!a.condition.empty() && !hold) {
    throw UsageError("--condition only accepts 'none'; pass --model otherwise");
  }
  if (hold == !a.model.empty()) {
    throw UsageError("give exactly one of --model or --condition none");
  }
  SimConfig sim_cfg = LoadSim(a.config);
  std::optional<PredictiveModel> model;
  if (!hold) {
    model = PredictiveModel::Load(a.model, PredictiveModel::DefaultSizes());
  }
  DurationTicks(a.duration);
  HandSim sim(sim_cfg, a.seed);
  DisturbanceSchedule sched =
      MakeScenario(ParseScenario(a.scenario), a.seed, a.duration, sim_cfg);
  ExperimentLog log = RunStabilized(sim, model ? &*model : nullptr, {}, sched,
                                    a.duration, a.seed);
  WriteTickCsv(log, a.out);
  if (!a.diag.empty()) WriteDiagnosticsCsv(log, a.diag, a.wall_time);
  TrialSummary s = Summarize(log);
  std::cout << "ticks " << log.ticks.size();
  PrintCheckpoints(s);
  std::cout << ' ' << FormatDrop(s) << '\n';
  return 0;
}

struct EvaluateArgs {
  std::string log;
  std::uint64_t seed = 1;  // unused: evaluation is deterministic
  std::string config;
  std::string out;
};

int RunEvaluate(const EvaluateArgs& a) {
  LogMetrics m = EvaluateLog(a.log);
  if (!a.out.empty()) WriteMetricsCsv(m, a.out);
  std::cout << "ticks " << m.eval_loss.size();
  PrintCheckpoints(m.summary);
  std::cout << '\n';
  return 0;
}

struct MatrixArgs {
  std::string scenario = "hammer";
  int trials = 5;
  std::vector<std::string> conditions{"variable-stabilizer",
                                      "constant-stabilizer", "none"};
  std::string variable_model;
  std::string constant_model;
  double duration = 60.0;
  std::uint64_t seed = 1;
  std::string config;
  std::string out;
};

int RunMatrixCommand(const MatrixArgs& a) {
  MatrixConfig mc;
  mc.scenario = ParseScenario(a.scenario);
  for (const auto& c : a.conditions) mc.conditions.push_back(ParseCondition(c));
  if (a.trials < 1) throw UsageError("--trials must be >= 1");
  mc.trials = a.trials;
  mc.base_seed = a.seed;
  DurationTicks(a.duration);
  mc.duration = a.duration;
  mc.variable_model = a.variable_model;
  mc.constant_model = a.constant_model;
  mc.sim = LoadSim(a.config);
  mc.out_dir = a.out;
  std::filesystem::create_directories(a.out);
  MatrixResult r = RunMatrix(mc);
  for (const auto& t : r.trials) {
    std::cout << t.condition << " trial " << t.trial;
    PrintCheckpoints(t);
    std::cout << ' ' << (t.status == "ok" ? FormatDrop(t) : t.status) << '\n';
  }
  return 0;
}

void AddCommon(CLI::App* cmd, std::uint64_t& seed, std::string& config) {
  cmd->add_option("--seed", seed, "random seed");
  cmd->add_option("--config", config, "physics config file")
      ->check(CLI::ExistingFile);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grasp stabilization on a simulated tendon-driven hand"};
  app.require_subcommand(1);

  CollectArgs collect;
  auto* c = app.add_subcommand("collect", "random search data collection");
  c->add_option("--mode", collect.mode, "variable | constant")
      ->check(CLI::IsMember({"variable", "constant"}));
  c->add_option("--duration", collect.duration, "seconds");
  c->add_option("--scenario", collect.scenario, "disturbance during collection")
      ->check(CLI::IsMember({"quiet", "hammer", "vacuum", "broom"}));
  AddCommon(c, collect.seed, collect.config);
  c->add_option("--out", collect.out, "log CSV")->required();

  TrainArgs train;
  auto* t = app.add_subcommand("train", "fit the predictive model to a log");
  t->add_option("--data", train.data, "log CSV")->required()->check(CLI::ExistingFile);
  t->add_option("--epochs", train.epochs)->check(CLI::PositiveNumber);
  t->add_option("--batch", train.batch)->check(CLI::PositiveNumber);
  t->add_option("--lr", train.lr)->check(CLI::PositiveNumber);
  AddCommon(t, train.seed, train.config);
  t->add_option("--out", train.out, "checkpoint")->required();
  t->add_option("--curve", train.curve, "loss curve CSV (default <out>.loss.csv)");

  StabilizeArgs stab;
  auto* s = app.add_subcommand("stabilize", "one closed-loop run");
  s->add_option("--model", stab.model, "checkpoint")->check(CLI::ExistingFile);
  s->add_option("--condition", stab.condition, "'none' holds the grasp posture");
  s->add_option("--scenario", stab.scenario)
      ->check(CLI::IsMember({"quiet", "hammer", "vacuum", "broom"}));
  s->add_option("--duration", stab.duration, "seconds");
  AddCommon(s, stab.seed, stab.config);
  s->add_option("--out", stab.out, "per-tick CSV")->required();
  s->add_option("--diag", stab.diag, "optimizer diagnostics CSV");
  s->add_flag("--wall-time", stab.wall_time, "add wall time to diagnostics");

  EvaluateArgs eval;
  auto* e = app.add_subcommand("evaluate", "recompute metrics from a tick CSV");
  e->add_option("--log", eval.log, "per-tick CSV")->required()->check(CLI::ExistingFile);
  AddCommon(e, eval.seed, eval.config);
  e->add_option("--out", eval.out, "metrics CSV");

  MatrixArgs matrix;
  auto* m = app.add_subcommand("matrix", "trials x conditions comparison");
  m->add_option("--scenario", matrix.scenario)
      ->check(CLI::IsMember({"quiet", "hammer", "vacuum", "broom"}));
  m->add_option("--trials", matrix.trials);
  m->add_option("--conditions", matrix.conditions)
      ->delimiter(',')
      ->check(CLI::IsMember({"variable-stabilizer", "constant-stabilizer", "none"}));
  m->add_option("--variable-model", matrix.variable_model)->check(CLI::ExistingFile);
  m->add_option("--constant-model", matrix.constant_model)->check(CLI::ExistingFile);
  m->add_option("--duration", matrix.duration, "seconds per trial");
  AddCommon(m, matrix.seed, matrix.config);
  m->add_option("--out", matrix.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    std::cerr << "error: usage: " << ex.what() << '\n';
    return 2;
  }

  try {
    if (*c) return RunCollect(collect);
    if (*t) return RunTrain(train);
    if (*s) return RunStabilize(stab);
    if (*e) return RunEvaluate(eval);
    if (*m) return RunMatrixCommand(matrix);
  } catch (const UsageError& ex) {
    std::cerr << "error: usage: " << ex.what() << '\n';
    return 2;
  } catch (const ConfigError& ex) {
    std::cerr << "error: config: " << ex.what() << '\n';
    return 1;
  } catch (const ShapeError& ex) {
    std::cerr << "error: shape: " << ex.what() << '\n';
    return 1;
  } catch (const InvalidInput& ex) {
    std::cerr << "error: invalid-input: " << ex.what() << '\n';
    return 1;
  } catch (const std::exception& ex) {
    std::cerr << "error: runtime: " << ex.what() << '\n';
    return 1;
  }
  return 0;
}
