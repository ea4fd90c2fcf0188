#ifndef GSTAB_TYPES_H_
#define GSTAB_TYPES_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gstab {

// dimensions of the hand problem
inline constexpr std::size_t kNumMuscles = 4;
inline constexpr std::size_t kNumLoadcells = 9;
inline constexpr std::size_t kSensorDim = kNumMuscles + kNumLoadcells;  // 13
inline constexpr std::size_t kStateDim = 2 * kNumMuscles;               // 8
inline constexpr std::size_t kControlDim = kNumMuscles;                 // 4
inline constexpr std::size_t kHorizon = 10;
inline constexpr std::size_t kModelInputDim =
    kSensorDim + kStateDim + kControlDim * kHorizon;                    // 61
inline constexpr std::size_t kModelOutputDim = kSensorDim * kHorizon;   // 130

// control loop
inline constexpr double kControlRateHz = 5.0;
inline constexpr double kControlPeriod = 1.0 / kControlRateHz;

// unit scaling between raw sensor units and model units
inline constexpr double kLengthScale = 10.0;     // mm -> mm/10
inline constexpr double kLoadcellScale = 10.0;   // N -> N/10
inline constexpr double kTensionScale = 200.0;   // N -> N/200

// control input bounds (mm, relative to the feedforward grasp posture)
inline constexpr double kInputMinMm = -5.0;
inline constexpr double kInputMaxMm = 20.0;

// Independent random streams derived from one user-facing seed, so the same
// --seed never feeds two consumers the same sequence.
enum class Stream : std::uint32_t {
  kSensorNoise = 1,
  kSearch,
  kSplit,
  kInit,
  kShuffle,
  kStabilizer,
  kScenario,
};

inline std::uint64_t DeriveSeed(std::uint64_t seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::array<std::uint32_t, 2> out;
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

// Thrown when vector/sequence dimensions disagree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Thrown for non-finite or out-of-domain inputs.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Vec4 = std::array<double, 4>;
using Vec9 = std::array<double, 9>;

// Contact state s = (F, C). Flattened order is F then C.
struct SensorState {
  Vec4 tension{};   // F
  Vec9 loadcell{};  // C

  std::array<double, kSensorDim> Flatten() const;
  static SensorState Unflatten(std::span<const double> v);
  bool operator==(const SensorState&) const = default;
};

// Control state i = (l, l_dot). Flattened order is l then l_dot.
struct ControlState {
  Vec4 length{};
  Vec4 velocity{};

  std::array<double, kStateDim> Flatten() const;
  static ControlState Unflatten(std::span<const double> v);
  bool operator==(const ControlState&) const = default;
};

// Delta of target muscle lengths from the grasp posture, in raw mm.
struct ControlInput {
  Vec4 delta{};

  bool operator==(const ControlInput&) const = default;
};

// u_[t, t+T-1], raw mm.
using ControlSequence = std::vector<ControlInput>;
// s_[t+1, t+T].
using SensorSequence = std::vector<SensorState>;

// Raw measurement bundle as produced by the hand.
struct RawReading {
  SensorState sensors;  // F in N, C in N
  ControlState state;   // l in mm, l_dot in mm per control tick
};

struct Scaled {
  SensorState sensors;
  ControlState state;
};

double ScaleLength(double mm);
double ScaleLoadcell(double newton);
double ScaleTension(double newton);
double UnscaleLength(double model);
double UnscaleLoadcell(double model);
double UnscaleTension(double model);

// Converts a raw reading into model units. Throws InvalidInput on non-finite
// values or negative forces.
Scaled ScaleToModel(const RawReading& raw);
RawReading UnscaleFromModel(const Scaled& scaled);

ControlInput ClampInput(const ControlInput& u);
ControlSequence ClampSequence(const ControlSequence& seq);

// Time-major flattening, T*4 values in model units (mm/10).
std::vector<double> FlattenScaled(const ControlSequence& seq);
ControlSequence UnflattenScaled(std::span<const double> v);

std::vector<double> Flatten(const SensorSequence& seq);
SensorSequence UnflattenSensors(std::span<const double> v);

// Backward difference over one control tick.
Vec4 BackwardDifference(const Vec4& current, const Vec4& previous);

// Builds a 61-dim network input from scaled state and a raw-mm sequence.
std::vector<double> ModelInput(const Scaled& now, const ControlSequence& seq);

}  // namespace gstab

#endif  // GSTAB_TYPES_H_
