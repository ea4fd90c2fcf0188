#include "gstab/types.h"

#include <algorithm>
#include <cmath>

namespace gstab {
namespace {

void RequireFinite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw InvalidInput(std::string("non-finite ") + what);
  }
}

void RequireNonNegative(double v, const char* what) {
  RequireFinite(v, what);
  if (v < 0.0) throw InvalidInput(std::string("negative ") + what);
}

}  // namespace

std::array<double, kSensorDim> SensorState::Flatten() const {
  std::array<double, kSensorDim> out{};
  std::copy(tension.begin(), tension.end(), out.begin());
  std::copy(loadcell.begin(), loadcell.end(), out.begin() + kNumMuscles);
  return out;
}

SensorState SensorState::Unflatten(std::span<const double> v) {
  if (v.size() != kSensorDim) throw ShapeError("sensor state needs 13 values");
  SensorState s;
  std::copy_n(v.begin(), kNumMuscles, s.tension.begin());
  std::copy_n(v.begin() + kNumMuscles, kNumLoadcells, s.loadcell.begin());
  return s;
}

std::array<double, kStateDim> ControlState::Flatten() const {
  std::array<double, kStateDim> out{};
  std::copy(length.begin(), length.end(), out.begin());
  std::copy(velocity.begin(), velocity.end(), out.begin() + kNumMuscles);
  return out;
}

ControlState ControlState::Unflatten(std::span<const double> v) {
  if (v.size() != kStateDim) throw ShapeError("control state needs 8 values");
  ControlState c;
  std::copy_n(v.begin(), kNumMuscles, c.length.begin());
  std::copy_n(v.begin() + kNumMuscles, kNumMuscles, c.velocity.begin());
  return c;
}

double ScaleLength(double mm) { return mm / kLengthScale; }
double ScaleLoadcell(double newton) { return newton / kLoadcellScale; }
double ScaleTension(double newton) { return newton / kTensionScale; }
double UnscaleLength(double model) { return model * kLengthScale; }
double UnscaleLoadcell(double model) { return model * kLoadcellScale; }
double UnscaleTension(double model) { return model * kTensionScale; }

Scaled ScaleToModel(const RawReading& raw) {
  Scaled out;
  for (std::size_t k = 0; k < kNumMuscles; ++k) {
    RequireNonNegative(raw.sensors.tension[k], "tension");
    RequireFinite(raw.state.length[k], "muscle length");
    RequireFinite(raw.state.velocity[k], "muscle velocity");
    out.sensors.tension[k] = ScaleTension(raw.sensors.tension[k]);
    out.state.length[k] = ScaleLength(raw.state.length[k]);
    // velocity shares the length scale
    out.state.velocity[k] = ScaleLength(raw.state.velocity[k]);
  }
  for (std::size_t j = 0; j < kNumLoadcells; ++j) {
    RequireNonNegative(raw.sensors.loadcell[j], "loadcell");
    out.sensors.loadcell[j] = ScaleLoadcell(raw.sensors.loadcell[j]);
  }
  return out;
}

RawReading UnscaleFromModel(const Scaled& scaled) {
  RawReading out;
  for (std::size_t k = 0; k < kNumMuscles; ++k) {
    out.sensors.tension[k] = UnscaleTension(scaled.sensors.tension[k]);
    out.state.length[k] = UnscaleLength(scaled.state.length[k]);
    out.state.velocity[k] = UnscaleLength(scaled.state.velocity[k]);
  }
  for (std::size_t j = 0; j < kNumLoadcells; ++j) {
    out.sensors.loadcell[j] = UnscaleLoadcell(scaled.sensors.loadcell[j]);
  }
  return out;
}

ControlInput ClampInput(const ControlInput& u) {
  ControlInput out;
  for (std::size_t k = 0; k < kControlDim; ++k) {
    out.delta[k] = std::max(kInputMinMm, std::min(u.delta[k], kInputMaxMm));
  }
  return out;
}

ControlSequence ClampSequence(const ControlSequence& seq) {
  ControlSequence out;
  out.reserve(seq.size());
  for (const auto& u : seq) out.push_back(ClampInput(u));
  return out;
}

std::vector<double> FlattenScaled(const ControlSequence& seq) {
  std::vector<double> out;
  out.reserve(seq.size() * kControlDim);
  for (const auto& u : seq) {
    for (double d : u.delta) out.push_back(ScaleLength(d));
  }
  return out;
}

ControlSequence UnflattenScaled(std::span<const double> v) {
  if (v.size() % kControlDim != 0) {
    throw ShapeError("control sequence length not a multiple of 4");
  }
  ControlSequence out(v.size() / kControlDim);
  for (std::size_t t = 0; t < out.size(); ++t) {
    for (std::size_t k = 0; k < kControlDim; ++k) {
      out[t].delta[k] = UnscaleLength(v[t * kControlDim + k]);
    }
  }
  return out;
}

std::vector<double> Flatten(const SensorSequence& seq) {
  std::vector<double> out;
  out.reserve(seq.size() * kSensorDim);
  for (const auto& s : seq) {
    auto f = s.Flatten();
    out.insert(out.end(), f.begin(), f.end());
  }
  return out;
}

SensorSequence UnflattenSensors(std::span<const double> v) {
  if (v.size() % kSensorDim != 0) {
    throw ShapeError("sensor sequence length not a multiple of 13");
  }
  SensorSequence out;
  for (std::size_t i = 0; i < v.size(); i += kSensorDim) {
    out.push_back(SensorState::Unflatten(v.subspan(i, kSensorDim)));
  }
  return out;
}

Vec4 BackwardDifference(const Vec4& current, const Vec4& previous) {
  Vec4 out{};
  for (std::size_t k = 0; k < 4; ++k) out[k] = current[k] - previous[k];
  return out;
}

std::vector<double> ModelInput(const Scaled& now, const ControlSequence& seq) {
  if (seq.size() != kHorizon) throw ShapeError("control sequence must have T=10");
  std::vector<double> x;
  x.reserve(kModelInputDim);
  auto s = now.sensors.Flatten();
  auto i = now.state.Flatten();
  x.insert(x.end(), s.begin(), s.end());
  x.insert(x.end(), i.begin(), i.end());
  auto u = FlattenScaled(seq);
  x.insert(x.end(), u.begin(), u.end());
  return x;
}

}  // namespace gstab
