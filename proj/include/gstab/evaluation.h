#ifndef GSTAB_EVALUATION_H_
#define GSTAB_EVALUATION_H_

#include <cstdint>
#include <string>
#include <vector>

#include "gstab/hand_sim.h"
#include "gstab/network.h"
#include "gstab/stabilizer.h"

namespace gstab {

// Centered moving average over `window` samples (2 s at 5 Hz), truncated at
// the ends. Output length equals input length.
std::vector<double> MovingAverage(const std::vector<double>& series,
                                  int window = 10);

enum class Condition { kVariableStabilizer, kConstantStabilizer, kNone };

Condition ParseCondition(const std::string& name);
std::string ConditionName(Condition c);

// Moving-average checkpoints reported per trial (s).
inline constexpr double kCheckpoints[] = {0.0, 30.0, 60.0};

struct TrialSummary {
  std::string scenario;
  std::string condition;
  int trial = 0;
  std::uint64_t seed = 0;
  std::vector<double> checkpoints;  // moving-average L_eval at kCheckpoints
  bool success = true;
  double drop_time = 0.0;  // NaN when successful
  std::string status = "ok";
};

// Index of the tick reported for checkpoint time `t`; clipped to the last
// logged tick (so a dropped trial reports its final state).
std::size_t CheckpointIndex(double t, std::size_t n_ticks);

TrialSummary Summarize(const ExperimentLog& log);

// Per-tick CSV: tick,time,l0..3,ldot0..3,F0..3,C0..8,s0..s12,u0..3,
// unext0..3,l_eval,flags.
std::string TickCsvHeader();
void WriteTickCsv(const ExperimentLog& log, const std::string& path);
ExperimentLog ReadTickCsv(const std::string& path);

// tick,loss_start,loss_end,candidate,gamma1..gammaE,unext0..3[,wall_ms]
// Wall time is off by default so reruns stay byte-identical.
void WriteDiagnosticsCsv(const ExperimentLog& log, const std::string& path,
                         bool wall_time = false);

struct LogMetrics {
  std::vector<double> eval_loss;  // recomputed from the scaled sensor columns
  std::vector<double> moving_average;
  TrialSummary summary;
};

// Recomputes L_eval and its moving average from a per-tick CSV; keep is the
// first row's contact state.
LogMetrics EvaluateLog(const std::string& tick_csv, double c_loss = 10.0);
void WriteMetricsCsv(const LogMetrics& m, const std::string& path);

struct MatrixConfig {
  ScenarioKind scenario = ScenarioKind::kHammer;
  std::vector<Condition> conditions;
  int trials = 5;
  std::uint64_t base_seed = 1;  // trial i uses base_seed + i
  double duration = 60.0;
  std::string variable_model;   // checkpoint paths
  std::string constant_model;
  SimConfig sim;
  StabilizerConfig stabilizer;
  std::string out_dir;  // empty: nothing written
};

struct MatrixResult {
  std::vector<TrialSummary> trials;
};

// Runs trials x conditions. Missing checkpoints throw ConfigError before any
// trial starts; a trial that throws is recorded as failed with its reason.
MatrixResult RunMatrix(const MatrixConfig& cfg);

std::string SummaryCsvHeader();
void WriteSummaryCsv(const std::vector<TrialSummary>& rows, const std::string& path);
// Mean and sample variance per condition and checkpoint.
void WriteSummaryStatsCsv(const std::vector<TrialSummary>& rows,
                          const std::string& path);

// epoch,train_loss,test_loss
void WriteLossCurveCsv(const std::vector<EpochLoss>& curve,
                       const std::string& path);

double Mean(const std::vector<double>& v);
double SampleVariance(const std::vector<double>& v);

}  // namespace gstab

#endif  // GSTAB_EVALUATION_H_
