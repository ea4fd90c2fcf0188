#ifndef GSTAB_SEARCH_H_
#define GSTAB_SEARCH_H_

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gstab/hand_sim.h"
#include "gstab/network.h"
#include "gstab/types.h"

namespace gstab {

enum class SearchMode { kVariable, kConstant };

SearchMode ParseSearchMode(const std::string& name);
std::string SearchModeName(SearchMode mode);

struct SearchConfig {
  double amplitude = 3.0;    // C_rand, mm
  double phase_rate = 0.02;  // C_time, 1/tick
  SearchMode mode = SearchMode::kVariable;
  int duration_ticks = 900;
  std::uint64_t seed = 0;

  void Validate() const;
};

// Step amplitude |Delta u| at tick t.
double SearchAmplitude(const SearchConfig& cfg, long tick);

// One random-walk step: u_prev + Uniform(-|du|, |du|) per muscle, clamped.
ControlInput SearchStep(const SearchConfig& cfg, long tick,
                        const ControlInput& u_prev, std::mt19937_64& rng);

struct LogRecord {
  long tick = 0;
  RawReading reading;  // l (mm), l_dot (mm/tick), F (N), C (N)
  ControlInput command;
  int flags = 0;
};

inline constexpr int kFlagDropped = 1;

struct CollectionLog {
  std::vector<LogRecord> records;
  bool truncated = false;  // a tool-dropped event ended collection early
};

// Runs the random search from the grasp posture. The hand is read at each
// tick, then the command for that tick is chosen and held for one period.
CollectionLog Collect(HandSim& sim, const SearchConfig& cfg,
                      const DisturbanceSchedule& sched = {});

// CSV with header tick,l0..l3,ldot0..ldot3,F0..F3,C0..C8,u0..u3,flags.
void WriteLogCsv(const CollectionLog& log, const std::string& path);
CollectionLog ReadLogCsv(const std::string& path);
std::string LogCsvHeader();

// Training pairs stored column-wise: x is 61 x n, y is 130 x n.
struct PairSet {
  Eigen::MatrixXd x;
  Eigen::MatrixXd y;
  std::size_t size() const { return static_cast<std::size_t>(x.cols()); }
};

// Stride-1 windows of T+1 ticks; yields records.size() - T pairs.
PairSet BuildPairs(const CollectionLog& log, std::size_t horizon = kHorizon);

// Shuffled partition with ceil(ratio * n) training pairs.
std::pair<PairSet, PairSet> Split(const PairSet& pairs, double train_ratio,
                                  std::uint64_t seed);

PairSet Concatenate(const PairSet& a, const PairSet& b);

struct TrainingRun {
  PredictiveModel model;
  std::vector<EpochLoss> curve;
  std::size_t train_pairs = 0;
  std::size_t test_pairs = 0;
};

// Pairs, split and training of a fresh default model, all seeded from
// cfg.seed.
TrainingRun TrainOnLog(const CollectionLog& log, const TrainConfig& cfg,
                       double train_ratio = 0.8);

}  // namespace gstab

#endif  // GSTAB_SEARCH_H_
