#include "gstab/hand_sim.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "gstab/config_file.h"

namespace gstab {
namespace {

struct Binding {
  const char* key;
  double* data;
  std::size_t size;
};

template <std::size_t N>
Binding Bind(const char* key, std::array<double, N>& a) {
  return {key, a.data(), N};
}
Binding Bind(const char* key, double& v) { return {key, &v, 1}; }

// substeps is an int and handled on its own
std::vector<Binding> Bindings(SimConfig& c) {
  return {
      Bind("servo_time_constant", c.servo_time_constant),
      Bind("grasp_length", c.grasp_length),
      Bind("nominal_stretch", c.nominal_stretch),
      Bind("tension_stiffness", c.tension_stiffness),
      Bind("tension_rated", c.tension_rated),
      Bind("loadcell_rated", c.loadcell_rated),
      Bind("nominal_loadcell", c.nominal_loadcell),
      Bind("loadcell_muscle_weights", c.loadcell_muscle_weights),
      Bind("loadcell_pose_sensitivity", c.loadcell_pose_sensitivity),
      Bind("muscle_pose_coupling", c.muscle_pose_coupling),
      Bind("grip_threshold", c.grip_threshold),
      Bind("restore_rate", c.restore_rate),
      Bind("sag_gain", c.sag_gain),
      Bind("sag_direction", c.sag_direction),
      Bind("length_noise", c.length_noise),
      Bind("force_noise", c.force_noise),
      Bind("drop_fraction", c.drop_fraction),
      Bind("drop_hold", c.drop_hold),
      Bind("hammer_start", c.hammer_start),
      Bind("hammer_interval", c.hammer_interval),
      Bind("hammer_impulse", c.hammer_impulse),
      Bind("hammer_jitter", c.hammer_jitter),
      Bind("vacuum_drag", c.vacuum_drag),
      Bind("vacuum_drag_direction", c.vacuum_drag_direction),
      Bind("vacuum_drag_period", c.vacuum_drag_period),
      Bind("vacuum_interval", c.vacuum_interval),
      Bind("vacuum_impulse", c.vacuum_impulse),
      Bind("broom_drag", c.broom_drag),
      Bind("broom_drag_direction", c.broom_drag_direction),
      Bind("broom_mean_interval", c.broom_mean_interval),
      Bind("broom_impulse", c.broom_impulse),
      Bind("broom_jitter", c.broom_jitter),
  };
}

void Validate(const SimConfig& c) {
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0)) throw ConfigError(std::string(what) + " must be positive");
  };
  if (c.substeps < 1) throw ConfigError("substeps must be >= 1");
  positive(c.servo_time_constant, "servo_time_constant");
  positive(c.tension_stiffness, "tension_stiffness");
  positive(c.tension_rated, "tension_rated");
  positive(c.loadcell_rated, "loadcell_rated");
  positive(c.grip_threshold, "grip_threshold");
  positive(c.drop_hold, "drop_hold");
  positive(c.hammer_interval, "hammer_interval");
  positive(c.vacuum_interval, "vacuum_interval");
  positive(c.broom_mean_interval, "broom_mean_interval");
  for (double v : c.nominal_loadcell) positive(v, "nominal_loadcell");
  for (double v : c.nominal_stretch) positive(v, "nominal_stretch");
  if (c.length_noise < 0.0 || c.force_noise < 0.0) {
    throw ConfigError("noise levels must be >= 0");
  }
}

double Dot3(const double* row, const Vec3& p) {
  return row[0] * p[0] + row[1] * p[1] + row[2] * p[2];
}

Vec4 TensionsExact(const SimState& s, const SimConfig& cfg) {
  Vec4 f{};
  for (std::size_t k = 0; k < kNumMuscles; ++k) {
    double stretch = cfg.nominal_stretch[k] + (s.length[k] - cfg.grasp_length[k]) -
                     Dot3(&cfg.muscle_pose_coupling[3 * k], s.tool_pose);
    f[k] = std::min(cfg.tension_rated,
                    cfg.tension_stiffness * std::max(0.0, stretch));
  }
  return f;
}

double LoadcellDrive(const Vec4& tension, const SimConfig& cfg, std::size_t j) {
  double g = 0.0;
  for (std::size_t k = 0; k < kNumMuscles; ++k) {
    g += cfg.loadcell_muscle_weights[4 * j + k] * tension[k];
  }
  return g;
}

Vec4 NominalTensions(const SimConfig& cfg) {
  return TensionsExact(NominalState(cfg), cfg);
}

double Uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Vec3 Scaled3(const Vec3& v, double a) { return {v[0] * a, v[1] * a, v[2] * a}; }

}  // namespace

double SimConfig::GripNominal() const {
  Vec4 f = NominalTensions(*this);
  return f[0] + f[1] + f[2] + f[3];
}

SimConfig SimConfig::FromText(const std::string& text) {
  SimConfig cfg;
  KeyValues kv = ParseKeyValues(text);
  auto bindings = Bindings(cfg);
  for (const auto& [key, values] : kv) {
    if (key == "substeps") {
      if (values.size() != 1 || values[0] != std::floor(values[0])) {
        throw ConfigError("substeps must be one integer");
      }
      cfg.substeps = static_cast<int>(values[0]);
      continue;
    }
    auto it = std::find_if(bindings.begin(), bindings.end(),
                           [&](const Binding& b) { return key == b.key; });
    if (it == bindings.end()) throw ConfigError("unknown config key " + key);
    if (values.size() != it->size) {
      throw ConfigError(key + " expects " + std::to_string(it->size) +
                        " values, got " + std::to_string(values.size()));
    }
    std::copy(values.begin(), values.end(), it->data);
  }
  Validate(cfg);
  return cfg;
}

SimConfig SimConfig::FromFile(const std::string& path) {
  std::ifstream probe(path);
  if (!probe) throw ConfigError("cannot open config " + path);
  std::stringstream buf;
  buf << probe.rdbuf();
  return FromText(buf.str());
}

std::string SimConfig::ToText() const {
  SimConfig copy = *this;
  std::ostringstream out;
  out << std::setprecision(17);
  out << "substeps = " << substeps << "\n";
  for (const auto& b : Bindings(copy)) {
    out << b.key << " =";
    for (std::size_t i = 0; i < b.size; ++i) {
      out << (i ? ", " : " ") << b.data[i];
    }
    out << "\n";
  }
  return out.str();
}

SimConfig SimConfig::Noiseless() const {
  SimConfig c = *this;
  c.length_noise = 0.0;
  c.force_noise = 0.0;
  return c;
}

ScenarioKind ParseScenario(const std::string& name) {
  if (name == "quiet") return ScenarioKind::kQuiet;
  if (name == "hammer") return ScenarioKind::kHammer;
  if (name == "vacuum") return ScenarioKind::kVacuum;
  if (name == "broom") return ScenarioKind::kBroom;
  throw InvalidInput("unknown scenario '" + name + "'");
}

std::string ScenarioName(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::kQuiet: return "quiet";
    case ScenarioKind::kHammer: return "hammer";
    case ScenarioKind::kVacuum: return "vacuum";
    case ScenarioKind::kBroom: return "broom";
  }
  return "quiet";
}

Vec3 DisturbanceSchedule::DragAt(double t) const {
  if (drag == 0.0) return {0.0, 0.0, 0.0};
  double a = drag;
  if (drag_period > 0.0) a *= std::sin(2.0 * M_PI * t / drag_period);
  return Scaled3(drag_direction, a);
}

DisturbanceSchedule MakeScenario(ScenarioKind kind, std::uint64_t seed,
                                 double duration, const SimConfig& cfg) {
  DisturbanceSchedule sched;
  sched.kind = kind;
  // one stream per (seed, kind) pair
  std::mt19937_64 rng(DeriveSeed(seed * 8 + static_cast<std::uint64_t>(kind),
                                 Stream::kScenario));
  switch (kind) {
    case ScenarioKind::kQuiet:
      break;
    case ScenarioKind::kHammer: {
      for (int i = 0;; ++i) {
        double t = cfg.hammer_start + i * cfg.hammer_interval;
        if (t >= duration) break;
        double gain = 1.0 + cfg.hammer_jitter * Uniform(rng, -1.0, 1.0);
        sched.events.push_back({t, Scaled3(cfg.hammer_impulse, gain)});
      }
      break;
    }
    case ScenarioKind::kVacuum: {
      sched.drag = cfg.vacuum_drag;
      sched.drag_direction = cfg.vacuum_drag_direction;
      sched.drag_period = cfg.vacuum_drag_period;
      for (int i = 1;; ++i) {
        double t = i * cfg.vacuum_interval +
                   0.25 * cfg.vacuum_interval * Uniform(rng, -1.0, 1.0);
        if (t >= duration) break;
        Vec3 imp = Scaled3(cfg.vacuum_impulse, Uniform(rng, 0.5, 1.5));
        if (Uniform(rng, 0.0, 1.0) < 0.5) imp[1] = -imp[1];
        sched.events.push_back({t, imp});
      }
      break;
    }
    case ScenarioKind::kBroom: {
      sched.drag = cfg.broom_drag;
      sched.drag_direction = cfg.broom_drag_direction;
      std::exponential_distribution<double> gap(1.0 / cfg.broom_mean_interval);
      double t = 0.0;
      while (true) {
        t += gap(rng);
        if (t >= duration) break;
        double gain = 1.0 + cfg.broom_jitter * Uniform(rng, -1.0, 1.0);
        Vec3 imp = Scaled3(cfg.broom_impulse, gain);
        if (Uniform(rng, 0.0, 1.0) < 0.5) imp[1] = -imp[1];
        if (Uniform(rng, 0.0, 1.0) < 0.5) imp[2] = -imp[2];
        sched.events.push_back({t, imp});
      }
      break;
    }
  }
  return sched;
}

SimState NominalState(const SimConfig& cfg) {
  SimState s;
  s.length = cfg.grasp_length;
  s.target_length = cfg.grasp_length;
  return s;
}

double Grip(const SimState& state, const SimConfig& cfg) {
  Vec4 f = TensionsExact(state, cfg);
  return f[0] + f[1] + f[2] + f[3];
}

SimState Step(const SimState& state, const ControlInput& u,
              const DisturbanceSchedule& sched, double dt,
              const SimConfig& cfg) {
  SimState next = state;
  const double grip = Grip(state, cfg);
  const double ratio = grip / cfg.grip_threshold;
  const double slip = std::max(0.0, 1.0 - ratio);

  // tool: relax toward a grip-dependent rest pose, disturbances pass through
  // in proportion to the slip factor
  const double sag = cfg.sag_gain * (cfg.GripNominal() - grip) / cfg.grip_threshold;
  const Vec3 drag = sched.DragAt(state.time);
  for (std::size_t a = 0; a < 3; ++a) {
    double rest = sag * cfg.sag_direction[a];
    double rate = -cfg.restore_rate * ratio * (state.tool_pose[a] - rest) +
                  slip * drag[a];
    next.tool_pose[a] += rate * dt;
  }
  const double t_end = state.time + dt;
  for (const auto& ev : sched.events) {
    if (ev.time >= t_end) break;
    if (ev.time < state.time) continue;
    for (std::size_t a = 0; a < 3; ++a) next.tool_pose[a] += slip * ev.impulse[a];
  }

  // first-order servo toward l_target_0 + u
  const double blend = 1.0 - std::exp(-dt / cfg.servo_time_constant);
  for (std::size_t k = 0; k < kNumMuscles; ++k) {
    next.target_length[k] = cfg.grasp_length[k] + u.delta[k];
    next.length[k] += (next.target_length[k] - state.length[k]) * blend;
  }
  next.time = t_end;
  return next;
}

SensorReading ReadSensorsExact(const SimState& state, const SimConfig& cfg) {
  SensorReading r;
  r.sensors.tension = TensionsExact(state, cfg);
  const Vec4 nominal = NominalTensions(cfg);
  for (std::size_t j = 0; j < kNumLoadcells; ++j) {
    double drive = LoadcellDrive(r.sensors.tension, cfg, j) /
                   LoadcellDrive(nominal, cfg, j);
    double pose = std::max(
        0.0, 1.0 + Dot3(&cfg.loadcell_pose_sensitivity[3 * j], state.tool_pose));
    r.sensors.loadcell[j] =
        std::min(cfg.loadcell_rated, cfg.nominal_loadcell[j] * drive * pose);
  }
  r.length = state.length;
  return r;
}

SensorReading ReadSensors(const SimState& state, const SimConfig& cfg,
                          std::mt19937_64& rng) {
  SensorReading r = ReadSensorsExact(state, cfg);
  std::normal_distribution<double> normal(0.0, 1.0);
  // draw a fixed number of variates so the stream does not depend on config
  for (auto& f : r.sensors.tension) {
    double n = normal(rng);
    f = std::clamp(f * (1.0 + cfg.force_noise * n), 0.0, cfg.tension_rated);
  }
  for (auto& c : r.sensors.loadcell) {
    double n = normal(rng);
    c = std::clamp(c * (1.0 + cfg.force_noise * n), 0.0, cfg.loadcell_rated);
  }
  for (auto& l : r.length) l += cfg.length_noise * normal(rng);
  return r;
}

DropDetector::DropDetector(const SimConfig& cfg) : hold_(cfg.drop_hold) {
  double total = 0.0;
  for (double c : cfg.nominal_loadcell) total += c;
  floor_ = cfg.drop_fraction * total;
}

bool DropDetector::Update(double time, const SensorState& raw) {
  if (dropped_) return true;
  double total = 0.0;
  for (double c : raw.loadcell) total += c;
  if (total < floor_) {
    if (!below_) {
      below_ = true;
      onset_ = time;
    }
    // small slack absorbs tick-time rounding
    if (time - onset_ >= hold_ - 1e-9) dropped_ = true;
  } else {
    below_ = false;
  }
  return dropped_;
}

HandSim::HandSim(const SimConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), state_(NominalState(cfg)), rng_(DeriveSeed(seed, Stream::kSensorNoise)) {}

RawReading HandSim::Read() {
  SensorReading r = ReadSensors(state_, cfg_, rng_);
  RawReading out;
  out.sensors = r.sensors;
  out.state.length = r.length;
  out.state.velocity = has_previous_
                           ? BackwardDifference(r.length, previous_length_)
                           : Vec4{};
  previous_length_ = r.length;
  has_previous_ = true;
  return out;
}

void HandSim::Advance(const ControlInput& u, const DisturbanceSchedule& sched) {
  const double dt = kControlPeriod / cfg_.substeps;
  for (int i = 0; i < cfg_.substeps; ++i) {
    state_ = Step(state_, u, sched, dt, cfg_);
  }
}

}  // namespace gstab
