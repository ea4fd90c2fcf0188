#include "gstab/evaluation.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>

#include "gstab/config_file.h"
#include "gstab/csv.h"

namespace gstab {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string CheckpointLabel(double t) {
  return std::to_string(static_cast<int>(std::lround(t)));
}

std::ofstream OpenOut(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

}  // namespace

std::vector<double> MovingAverage(const std::vector<double>& series, int window) {
  if (series.empty()) throw InvalidInput("moving average of an empty series");
  if (window < 1) throw InvalidInput("window must be positive");
  const long n = static_cast<long>(series.size());
  const long before = window / 2;
  const long after = window - 1 - before;
  std::vector<double> out(series.size());
  for (long i = 0; i < n; ++i) {
    const long lo = std::max(0L, i - before);
    const long hi = std::min(n - 1, i + after);
    double sum = 0.0;
    for (long j = lo; j <= hi; ++j) sum += series[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = sum / static_cast<double>(hi - lo + 1);
  }
  return out;
}

Condition ParseCondition(const std::string& name) {
  if (name == "variable-stabilizer" || name == "variable") {
    return Condition::kVariableStabilizer;
  }
  if (name == "constant-stabilizer" || name == "constant") {
    return Condition::kConstantStabilizer;
  }
  if (name == "none") return Condition::kNone;
  throw InvalidInput("unknown condition '" + name + "'");
}

std::string ConditionName(Condition c) {
  switch (c) {
    case Condition::kVariableStabilizer: return "variable-stabilizer";
    case Condition::kConstantStabilizer: return "constant-stabilizer";
    case Condition::kNone: return "none";
  }
  return "none";
}

std::size_t CheckpointIndex(double t, std::size_t n_ticks) {
  if (n_ticks == 0) throw InvalidInput("empty log");
  const auto idx = static_cast<std::size_t>(std::lround(t * kControlRateHz));
  return std::min(idx, n_ticks - 1);
}

TrialSummary Summarize(const ExperimentLog& log) {
  if (log.ticks.empty()) throw InvalidInput("empty experiment log");
  std::vector<double> losses;
  losses.reserve(log.ticks.size());
  for (const auto& t : log.ticks) losses.push_back(t.eval_loss);
  std::vector<double> ma = MovingAverage(losses);
  TrialSummary s;
  for (double t : kCheckpoints) s.checkpoints.push_back(ma[CheckpointIndex(t, ma.size())]);
  s.success = !log.dropped;
  s.drop_time = log.dropped ? log.drop_time : kNaN;
  return s;
}

std::string TickCsvHeader() {
  std::string h = "tick,time";
  for (int k = 0; k < 4; ++k) h += ",l" + std::to_string(k);
  for (int k = 0; k < 4; ++k) h += ",ldot" + std::to_string(k);
  for (int k = 0; k < 4; ++k) h += ",F" + std::to_string(k);
  for (int j = 0; j < 9; ++j) h += ",C" + std::to_string(j);
  for (int j = 0; j < 13; ++j) h += ",s" + std::to_string(j);
  for (int k = 0; k < 4; ++k) h += ",u" + std::to_string(k);
  for (int k = 0; k < 4; ++k) h += ",unext" + std::to_string(k);
  h += ",l_eval,flags";
  return h;
}

void WriteTickCsv(const ExperimentLog& log, const std::string& path) {
  std::ofstream out = OpenOut(path);
  out << TickCsvHeader() << '\n';
  for (const auto& t : log.ticks) {
    CsvRow row;
    row.Add(t.tick).Add(t.time);
    for (double v : t.raw.state.length) row.Add(v);
    for (double v : t.raw.state.velocity) row.Add(v);
    for (double v : t.raw.sensors.tension) row.Add(v);
    for (double v : t.raw.sensors.loadcell) row.Add(v);
    for (double v : t.scaled.Flatten()) row.Add(v);
    for (double v : t.applied.delta) row.Add(v);
    for (double v : t.next.delta) row.Add(v);
    row.Add(t.eval_loss).Add(t.flags);
    out << row.str() << '\n';
  }
}

ExperimentLog ReadTickCsv(const std::string& path) {
  CsvTable table = ReadCsv(path);
  if (table.header != SplitCsvLine(TickCsvHeader())) {
    throw InvalidInput(path + ": not a per-tick experiment log");
  }
  ExperimentLog log;
  for (const auto& f : table.rows) {
    TickRecord t;
    std::size_t c = 0;
    t.tick = static_cast<long>(f[c++]);
    t.time = f[c++];
    for (auto& v : t.raw.state.length) v = f[c++];
    for (auto& v : t.raw.state.velocity) v = f[c++];
    for (auto& v : t.raw.sensors.tension) v = f[c++];
    for (auto& v : t.raw.sensors.loadcell) v = f[c++];
    std::array<double, kSensorDim> s{};
    for (auto& v : s) v = f[c++];
    t.scaled = SensorState::Unflatten(s);
    for (auto& v : t.applied.delta) v = f[c++];
    for (auto& v : t.next.delta) v = f[c++];
    t.eval_loss = f[c++];
    t.flags = static_cast<int>(f[c++]);
    if (t.flags & kTickFlagDropped) {
      log.dropped = true;
      log.drop_time = t.time;
    }
    log.ticks.push_back(t);
  }
  if (!log.ticks.empty()) log.keep = log.ticks.front().scaled;
  return log;
}

void WriteDiagnosticsCsv(const ExperimentLog& log, const std::string& path,
                         bool wall_time) {
  std::size_t epochs = 0;
  for (const auto& t : log.ticks) {
    epochs = std::max(epochs, t.diagnostics.step_sizes.size());
  }
  std::ofstream out = OpenOut(path);
  out << "tick,loss_start,loss_end,candidate";
  for (std::size_t e = 0; e < epochs; ++e) out << ",gamma" << e + 1;
  for (int k = 0; k < 4; ++k) out << ",unext" << k;
  if (wall_time) out << ",wall_ms";
  out << '\n';
  for (const auto& t : log.ticks) {
    const auto& d = t.diagnostics;
    CsvRow row;
    row.Add(t.tick);
    row.Add(d.loss_trace.empty() ? kNaN : d.loss_trace.front());
    row.Add(d.loss_trace.empty() ? kNaN : d.loss_trace.back());
    row.Add(d.candidate);
    for (std::size_t e = 0; e < epochs; ++e) {
      row.Add(e < d.step_sizes.size() ? d.step_sizes[e] : kNaN);
    }
    for (double v : t.next.delta) row.Add(v);
    if (wall_time) row.Add(t.wall_ms);
    out << row.str() << '\n';
  }
}

LogMetrics EvaluateLog(const std::string& tick_csv, double c_loss) {
  ExperimentLog log = ReadTickCsv(tick_csv);
  if (log.ticks.empty()) throw InvalidInput(tick_csv + ": no ticks");
  LogMetrics m;
  for (auto& t : log.ticks) {
    t.eval_loss = EvalLoss(t.scaled, log.keep, c_loss);
    m.eval_loss.push_back(t.eval_loss);
  }
  m.moving_average = MovingAverage(m.eval_loss);
  m.summary = Summarize(log);
  return m;
}

void WriteMetricsCsv(const LogMetrics& m, const std::string& path) {
  std::ofstream out = OpenOut(path);
  out << "tick,l_eval,l_eval_ma\n";
  for (std::size_t i = 0; i < m.eval_loss.size(); ++i) {
    out << CsvRow().Add(static_cast<long>(i)).Add(m.eval_loss[i]).Add(m.moving_average[i]).str()
        << '\n';
  }
}

std::string SummaryCsvHeader() {
  std::string h = "scenario,condition,trial,seed";
  for (double t : kCheckpoints) h += ",ma_" + CheckpointLabel(t);
  h += ",success,drop_time,status";
  return h;
}

void WriteSummaryCsv(const std::vector<TrialSummary>& rows, const std::string& path) {
  std::ofstream out = OpenOut(path);
  out << SummaryCsvHeader() << '\n';
  for (const auto& r : rows) {
    CsvRow row;
    row.Add(r.scenario).Add(r.condition).Add(r.trial).Add(static_cast<unsigned long>(r.seed));
    for (std::size_t i = 0; i < std::size(kCheckpoints); ++i) {
      row.Add(i < r.checkpoints.size() ? r.checkpoints[i] : kNaN);
    }
    row.Add(r.success ? 1 : 0).Add(r.drop_time).Add(r.status);
    out << row.str() << '\n';
  }
}

void WriteLossCurveCsv(const std::vector<EpochLoss>& curve,
                       const std::string& path) {
  std::ofstream out = OpenOut(path);
  out << "epoch,train_loss,test_loss\n";
  for (const auto& e : curve) {
    out << CsvRow().Add(e.epoch).Add(e.train).Add(e.test).str() << '\n';
  }
}

double Mean(const std::vector<double>& v) {
  if (v.empty()) return kNaN;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double SampleVariance(const std::vector<double>& v) {
  if (v.size() < 2) return kNaN;
  const double m = Mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

void WriteSummaryStatsCsv(const std::vector<TrialSummary>& rows,
                          const std::string& path) {
  // keep first-seen condition order
  std::vector<std::string> order;
  for (const auto& r : rows) {
    if (std::find(order.begin(), order.end(), r.condition) == order.end()) {
      order.push_back(r.condition);
    }
  }
  std::ofstream out = OpenOut(path);
  out << "scenario,condition,checkpoint_s,mean,sample_variance,trials,failures\n";
  for (const auto& cond : order) {
    std::string scenario;
    int failures = 0, trials = 0;
    for (const auto& r : rows) {
      if (r.condition != cond) continue;
      scenario = r.scenario;
      ++trials;
      if (!r.success) ++failures;
    }
    for (std::size_t i = 0; i < std::size(kCheckpoints); ++i) {
      std::vector<double> values;
      for (const auto& r : rows) {
        if (r.condition == cond && r.status == "ok" && i < r.checkpoints.size()) {
          values.push_back(r.checkpoints[i]);
        }
      }
      CsvRow row;
      row.Add(scenario).Add(cond).Add(kCheckpoints[i]).Add(Mean(values));
      row.Add(SampleVariance(values)).Add(trials).Add(failures);
      out << row.str() << '\n';
    }
  }
}

MatrixResult RunMatrix(const MatrixConfig& cfg) {
  if (cfg.trials < 1) throw InvalidInput("trials must be >= 1");
  if (cfg.conditions.empty()) throw InvalidInput("no conditions requested");
  cfg.stabilizer.Validate();

  std::map<Condition, PredictiveModel> models;
  for (Condition c : cfg.conditions) {
    if (c == Condition::kNone || models.count(c)) continue;
    const std::string& path = c == Condition::kVariableStabilizer
                                  ? cfg.variable_model
                                  : cfg.constant_model;
    if (path.empty() || !std::filesystem::exists(path)) {
      throw ConfigError("missing checkpoint for " + ConditionName(c) +
                        (path.empty() ? "" : ": " + path));
    }
    models.emplace(c, PredictiveModel::Load(
                          path, {static_cast<int>(kModelInputDim), 100, 100, 100,
                                 static_cast<int>(kModelOutputDim)}));
  }
  if (!cfg.out_dir.empty()) std::filesystem::create_directories(cfg.out_dir);

  MatrixResult result;
  const std::string scenario = ScenarioName(cfg.scenario);
  for (Condition c : cfg.conditions) {
    const PredictiveModel* model = c == Condition::kNone ? nullptr : &models.at(c);
    for (int trial = 0; trial < cfg.trials; ++trial) {
      const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(trial);
      TrialSummary s;
      try {
        HandSim sim(cfg.sim, seed);
        DisturbanceSchedule sched = MakeScenario(cfg.scenario, seed, cfg.duration, cfg.sim);
        ExperimentLog log = RunStabilized(sim, model, cfg.stabilizer, sched,
                                          cfg.duration, seed);
        s = Summarize(log);
        if (!cfg.out_dir.empty()) {
          const std::string stem = cfg.out_dir + "/" + scenario + "_" +
                                   ConditionName(c) + "_trial" +
                                   std::to_string(trial + 1);
          WriteTickCsv(log, stem + ".csv");
          if (model) WriteDiagnosticsCsv(log, stem + "_diag.csv");
        }
      } catch (const std::exception& e) {
        s = TrialSummary{};
        s.checkpoints.assign(std::size(kCheckpoints), kNaN);
        s.success = false;
        s.drop_time = kNaN;
        s.status = std::string("failed: ") + e.what();
        // keep the CSV single-line and comma-free
        std::replace(s.status.begin(), s.status.end(), ',', ';');
        std::replace(s.status.begin(), s.status.end(), '\n', ' ');
      }
      s.scenario = scenario;
      s.condition = ConditionName(c);
      s.trial = trial + 1;
      s.seed = seed;
      result.trials.push_back(s);
    }
  }
  if (!cfg.out_dir.empty()) {
    WriteSummaryCsv(result.trials, cfg.out_dir + "/summary.csv");
    WriteSummaryStatsCsv(result.trials, cfg.out_dir + "/summary_stats.csv");
  }
  return result;
}

}  // namespace gstab
