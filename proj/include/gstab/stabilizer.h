#ifndef GSTAB_STABILIZER_H_
#define GSTAB_STABILIZER_H_

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gstab/hand_sim.h"
#include "gstab/network.h"
#include "gstab/types.h"

namespace gstab {

// All lengths here are model units (mm/10) unless a name says mm.
struct StabilizerConfig {
  int warm_candidates = 13;      // C_opt
  int constant_candidates = 13;  // C_const
  double input_weight = 0.1;     // C_min
  double smooth_weight = 0.1;    // C_adj
  double contact_loss_gain = 10.0;  // C_loss
  double step_max = 0.5;         // gamma_max
  int step_batch = 13;           // C^opt_batch
  int epochs = 10;               // C^opt_epoch
  double noise_half_width = 0.1;
  double u_min = ScaleLength(kInputMinMm);
  double u_max = ScaleLength(kInputMaxMm);

  void Validate() const;
};

// Sizes of one optimization problem. The hand uses 13/8/4/10; tests use
// reduced problems.
struct ProblemDims {
  int sensor = static_cast<int>(kSensorDim);
  int state = static_cast<int>(kStateDim);
  int control = static_cast<int>(kControlDim);
  int horizon = static_cast<int>(kHorizon);

  int input() const { return sensor + state + control * horizon; }
  int output() const { return sensor * horizon; }
  int sequence() const { return control * horizon; }
};

// L_grasp over flattened sequences: (1/T) sum of weighted squared errors,
// weight 1 where pred >= keep and c_loss elsewhere, per element.
double GraspLoss(const Eigen::VectorXd& pred, const Eigen::VectorXd& keep,
                 int horizon, double c_loss);
Eigen::VectorXd GraspLossGradient(const Eigen::VectorXd& pred,
                                  const Eigen::VectorXd& keep, int horizon,
                                  double c_loss);

// C_min ||u||^2 + C_adj sum_t ||u_t - u_{t+1}||^2 and its gradient.
double InputPenalty(const Eigen::VectorXd& u_seq, int control,
                    const StabilizerConfig& cfg);
Eigen::VectorXd InputPenaltyGradient(const Eigen::VectorXd& u_seq, int control,
                                     const StabilizerConfig& cfg);

// L_opt = L_grasp + input penalty.
double OptLoss(const Eigen::VectorXd& pred, const Eigen::VectorXd& keep,
               const Eigen::VectorXd& u_seq, const ProblemDims& dims,
               const StabilizerConfig& cfg);

// Typed wrappers over the hand's sequences (sensor values in model units,
// control sequences in raw mm).
double GraspLoss(const SensorSequence& pred, const SensorSequence& keep,
                 double c_loss = 10.0);
double OptLoss(const SensorSequence& pred, const SensorSequence& keep,
               const ControlSequence& u_seq, const StabilizerConfig& cfg = {});

// The setpoint s_keep and its T-fold replication.
struct KeepState {
  SensorState keep;  // model units

  SensorSequence Sequence(std::size_t horizon = kHorizon) const;
  Eigen::VectorXd Flat(std::size_t horizon = kHorizon) const;
};

// Columns 0..C_const-1 are constant fills over an even grid on [u_min, u_max];
// the rest are the shifted previous optimum (last element replicated) plus
// Uniform(-w, w) noise. No previous optimum means the zero sequence.
Eigen::MatrixXd InitCandidates(const std::optional<Eigen::VectorXd>& previous,
                               const ProblemDims& dims,
                               const StabilizerConfig& cfg,
                               std::mt19937_64& rng);
std::vector<ControlSequence> InitCandidates(
    const std::optional<ControlSequence>& previous, const StabilizerConfig& cfg,
    std::mt19937_64& rng);

struct TickDiagnostics {
  std::vector<double> loss_trace;  // incumbent after selection, then per epoch
  std::vector<double> step_sizes;  // chosen gamma per epoch
  int candidate = -1;              // winning initial candidate
  bool ok = true;
  std::string error;
};

struct TickResult {
  Eigen::VectorXd sequence;  // u_[t, t+T-1], element 0 frozen
  Eigen::VectorXd next;      // u_{t+1}
  TickDiagnostics diagnostics;
};

// dL_opt/du_seq through the network plus the analytic penalty gradient, with
// the frozen head zeroed.
Eigen::VectorXd OptLossGradient(const PredictiveModel& model,
                                const Eigen::VectorXd& current,
                                const Eigen::VectorXd& keep,
                                const Eigen::VectorXd& u_seq,
                                const ProblemDims& dims,
                                const StabilizerConfig& cfg);

// One control tick of the stabilizer. `current` is (s_t, i_t) scaled,
// `keep` the replicated setpoint, `sent` the u_t already on its way to the
// hand. Returns u_{t+1}.
TickResult OptimizeTick(const PredictiveModel& model,
                        const Eigen::VectorXd& current,
                        const Eigen::VectorXd& keep,
                        const std::optional<Eigen::VectorXd>& previous,
                        const Eigen::VectorXd& sent, const ProblemDims& dims,
                        const StabilizerConfig& cfg, std::mt19937_64& rng);

// L_eval: the grasp loss of the current state alone.
double EvalLoss(const SensorState& current, const SensorState& keep,
                double c_loss = 10.0);

struct TickRecord {
  long tick = 0;
  double time = 0.0;
  RawReading raw;
  SensorState scaled;
  ControlInput applied;  // mm, u_t acting on the hand during this tick
  ControlInput next;     // mm, u_{t+1} chosen during this tick
  double eval_loss = 0.0;
  int flags = 0;
  TickDiagnostics diagnostics;
  double wall_ms = 0.0;
};

struct ExperimentLog {
  std::vector<TickRecord> ticks;
  SensorState keep;  // model units
  bool dropped = false;
  double drop_time = 0.0;  // onset of the drop condition
};

inline constexpr int kTickFlagDropped = 1;
inline constexpr int kTickFlagSolverError = 2;

// 5 Hz closed loop: read, scale, optimize, log, then hold u_t for one period
// while u_{t+1} waits for the next tick. A null model holds the feedforward
// posture (u = 0). Keep is captured from the first reading.
ExperimentLog RunStabilized(HandSim& sim, const PredictiveModel* model,
                            const StabilizerConfig& cfg,
                            const DisturbanceSchedule& sched, double duration,
                            std::uint64_t seed);

}  // namespace gstab

#endif  // GSTAB_STABILIZER_H_
