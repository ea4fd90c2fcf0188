#ifndef GSTAB_HAND_SIM_H_
#define GSTAB_HAND_SIM_H_

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gstab/types.h"

namespace gstab {

using Vec3 = std::array<double, 3>;

// Physics and scenario constants of the simulated hand. Every field maps to
// a key of the same name in the flat config file (see configs/hand.cfg).
struct SimConfig {
  int substeps = 20;                 // physics substeps per control tick
  double servo_time_constant = 0.1;  // s

  // Feedforward grasp posture l_target_0 (mm). Muscle length is the tendon
  // take-up reported by the encoder, so a positive u tightens the grasp.
  Vec4 grasp_length{120.0, 115.0, 110.0, 105.0};
  // tendon stretch at the grasp posture (mm)
  Vec4 nominal_stretch{4.0, 6.0, 3.5, 7.0};
  double tension_stiffness = 10.0;  // N/mm
  double tension_rated = 400.0;     // N
  double loadcell_rated = 100.0;    // N
  Vec9 nominal_loadcell{4.0, 6.0, 3.0, 5.0, 7.0, 2.5, 4.5, 3.5, 5.5};

  // row-major 9x4: loadcell j picks up force from muscle k
  std::array<double, 36> loadcell_muscle_weights{
      1.0, 0.2, 0.0, 0.0,  //
      0.8, 0.3, 0.0, 0.1,  //
      0.2, 1.0, 0.1, 0.0,  //
      0.0, 0.8, 0.3, 0.0,  //
      0.0, 0.2, 1.0, 0.2,  //
      0.0, 0.0, 0.8, 0.4,  //
      0.0, 0.0, 0.2, 1.0,  //
      0.1, 0.0, 0.0, 0.9,  //
      0.3, 0.3, 0.3, 0.3};
  // row-major 9x3: relative loadcell change per unit tool displacement
  std::array<double, 27> loadcell_pose_sensitivity{
      -0.6, 0.3,  0.2,   //
      -0.3, -0.4, 0.1,   //
      0.4,  0.5,  -0.2,  //
      -0.5, 0.2,  0.3,   //
      0.3,  -0.3, -0.3,  //
      -0.4, 0.6,  0.1,   //
      0.2,  -0.5, 0.4,   //
      -0.2, 0.1,  -0.4,  //
      0.5,  -0.2, 0.2};
  // row-major 4x3: tendon slack (mm) per unit tool displacement
  std::array<double, 12> muscle_pose_coupling{
      3.0, 1.0,  0.5,   //
      3.0, -0.5, 0.5,   //
      3.0, -1.0, -0.5,  //
      3.0, 0.5,  -0.5};

  double grip_threshold = 300.0;  // N of total tension; no slip above it
  double restore_rate = 0.1;      // 1/s at grip == grip_threshold
  double sag_gain = 1.0;          // rest-pose shift per unit grip deficit
  Vec3 sag_direction{1.0, 0.3, 0.0};

  double length_noise = 0.05;  // mm, additive
  double force_noise = 0.02;   // relative, multiplicative on F and C

  double drop_fraction = 0.05;  // of nominal loadcell 1-norm
  double drop_hold = 1.0;       // s

  // scenarios
  double hammer_start = 1.0;     // s
  double hammer_interval = 2.0;  // s
  Vec3 hammer_impulse{0.12, 0.04, 0.05};
  double hammer_jitter = 0.3;  // relative magnitude spread

  double vacuum_drag = 0.05;
  Vec3 vacuum_drag_direction{0.6, 0.8, 0.0};
  double vacuum_drag_period = 1.5;  // s
  double vacuum_interval = 1.0;     // s between small bumps
  Vec3 vacuum_impulse{0.03, 0.02, 0.0};

  double broom_drag = 0.02;
  Vec3 broom_drag_direction{1.0, 0.0, 0.0};
  double broom_mean_interval = 2.5;  // s, exponential gaps
  Vec3 broom_impulse{0.24, 0.08, 0.08};
  double broom_jitter = 0.6;

  double GripNominal() const;

  // Overrides defaults with the keys in `path`; unknown keys throw ConfigError.
  static SimConfig FromFile(const std::string& path);
  static SimConfig FromText(const std::string& text);
  std::string ToText() const;

  // Same constants with all sensor noise disabled.
  SimConfig Noiseless() const;
};

struct SimState {
  Vec4 length{};         // l_actual (mm)
  Vec4 target_length{};  // commanded absolute l (mm)
  Vec3 tool_pose{};      // slip coordinates relative to the initial grasp
  double time = 0.0;     // s
};

enum class ScenarioKind { kQuiet, kHammer, kVacuum, kBroom };

ScenarioKind ParseScenario(const std::string& name);
std::string ScenarioName(ScenarioKind kind);

struct ImpulseEvent {
  double time;
  Vec3 impulse;
  bool operator==(const ImpulseEvent&) const = default;
};

struct DisturbanceSchedule {
  ScenarioKind kind = ScenarioKind::kQuiet;
  std::vector<ImpulseEvent> events;  // sorted by time
  double drag = 0.0;
  Vec3 drag_direction{};
  double drag_period = 0.0;  // 0 means constant drag

  Vec3 DragAt(double t) const;
  bool operator==(const DisturbanceSchedule&) const = default;
};

// Deterministic per (kind, seed). Events cover [0, duration).
DisturbanceSchedule MakeScenario(ScenarioKind kind, std::uint64_t seed,
                                 double duration, const SimConfig& cfg);

SimState NominalState(const SimConfig& cfg);

// Total tendon tension without noise; the grip the slip law sees.
double Grip(const SimState& state, const SimConfig& cfg);

// Advances the hand and tool by dt. Events with time in [state.time,
// state.time + dt) are applied.
SimState Step(const SimState& state, const ControlInput& u,
              const DisturbanceSchedule& sched, double dt,
              const SimConfig& cfg);

struct SensorReading {
  SensorState sensors;  // raw N
  Vec4 length{};        // raw mm
};

// Noise-free sensor model.
SensorReading ReadSensorsExact(const SimState& state, const SimConfig& cfg);

// Sensor model with configured noise drawn from rng.
SensorReading ReadSensors(const SimState& state, const SimConfig& cfg,
                          std::mt19937_64& rng);

// Watches loadcell totals at control ticks for the tool-dropped condition.
class DropDetector {
 public:
  explicit DropDetector(const SimConfig& cfg);
  // Returns true once the condition has held for drop_hold seconds.
  bool Update(double time, const SensorState& raw);
  bool dropped() const { return dropped_; }
  // Time the loadcell total first fell below the floor for the current run.
  double onset() const { return onset_; }

 private:
  double floor_;
  double hold_;
  bool below_ = false;
  bool dropped_ = false;
  double onset_ = 0.0;
};

// One hand instance stepped at the 5 Hz control rate.
class HandSim {
 public:
  HandSim(const SimConfig& cfg, std::uint64_t seed);

  // Reads sensors at the current control tick. l_dot is the backward
  // difference against the previous read.
  RawReading Read();

  // Holds u for one control period.
  void Advance(const ControlInput& u, const DisturbanceSchedule& sched);

  const SimState& state() const { return state_; }
  const SimConfig& config() const { return cfg_; }

 private:
  SimConfig cfg_;
  SimState state_;
  std::mt19937_64 rng_;
  Vec4 previous_length_{};
  bool has_previous_ = false;
};

}  // namespace gstab

#endif  // GSTAB_HAND_SIM_H_
