#include "gstab/search.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "gstab/csv.h"

namespace gstab {

SearchMode ParseSearchMode(const std::string& name) {
  if (name == "variable") return SearchMode::kVariable;
  if (name == "constant") return SearchMode::kConstant;
  throw InvalidInput("unknown search mode '" + name + "'");
}

std::string SearchModeName(SearchMode mode) {
  return mode == SearchMode::kVariable ? "variable" : "constant";
}

void SearchConfig::Validate() const {
  if (!(amplitude > 0.0)) throw InvalidInput("C_rand must be positive");
  if (duration_ticks < static_cast<int>(kHorizon) + 1) {
    throw InvalidInput("search duration must cover at least T+1 ticks");
  }
}

double SearchAmplitude(const SearchConfig& cfg, long tick) {
  if (cfg.mode == SearchMode::kConstant) return cfg.amplitude;
  // a negative sine would give an empty interval; use its magnitude
  return std::abs(cfg.amplitude * std::sin(cfg.phase_rate * static_cast<double>(tick)));
}

ControlInput SearchStep(const SearchConfig& cfg, long tick,
                        const ControlInput& u_prev, std::mt19937_64& rng) {
  const double du = SearchAmplitude(cfg, tick);
  ControlInput u = u_prev;
  for (auto& d : u.delta) {
    // always draw so the stream length is independent of the amplitude
    double r = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
    d += du * r;
  }
  return ClampInput(u);
}

CollectionLog Collect(HandSim& sim, const SearchConfig& cfg,
                      const DisturbanceSchedule& sched) {
  cfg.Validate();
  std::mt19937_64 rng(DeriveSeed(cfg.seed, Stream::kSearch));
  DropDetector drop(sim.config());
  CollectionLog log;
  log.records.reserve(static_cast<std::size_t>(cfg.duration_ticks));
  ControlInput u{};
  for (long tick = 0; tick < cfg.duration_ticks; ++tick) {
    LogRecord rec;
    rec.tick = tick;
    rec.reading = sim.Read();
    u = SearchStep(cfg, tick, u, rng);
    rec.command = u;
    const bool dropped =
        drop.Update(static_cast<double>(tick) * kControlPeriod, rec.reading.sensors);
    if (dropped) rec.flags |= kFlagDropped;
    log.records.push_back(rec);
    if (dropped) {
      log.truncated = true;
      break;
    }
    sim.Advance(u, sched);
  }
  return log;
}

std::string LogCsvHeader() {
  std::string h = "tick";
  for (int k = 0; k < 4; ++k) h += ",l" + std::to_string(k);
  for (int k = 0; k < 4; ++k) h += ",ldot" + std::to_string(k);
  for (int k = 0; k < 4; ++k) h += ",F" + std::to_string(k);
  for (int j = 0; j < 9; ++j) h += ",C" + std::to_string(j);
  for (int k = 0; k < 4; ++k) h += ",u" + std::to_string(k);
  h += ",flags";
  return h;
}

void WriteLogCsv(const CollectionLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << LogCsvHeader() << '\n';
  for (const auto& r : log.records) {
    CsvRow row;
    row.Add(r.tick);
    for (double v : r.reading.state.length) row.Add(v);
    for (double v : r.reading.state.velocity) row.Add(v);
    for (double v : r.reading.sensors.tension) row.Add(v);
    for (double v : r.reading.sensors.loadcell) row.Add(v);
    for (double v : r.command.delta) row.Add(v);
    row.Add(r.flags);
    out << row.str() << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

CollectionLog ReadLogCsv(const std::string& path) {
  CsvTable table = ReadCsv(path);
  if (table.header != SplitCsvLine(LogCsvHeader())) {
    throw InvalidInput(path + ": not a collection log (header mismatch)");
  }
  CollectionLog log;
  for (const auto& f : table.rows) {
    LogRecord r;
    std::size_t c = 0;
    r.tick = static_cast<long>(f[c++]);
    for (auto& v : r.reading.state.length) v = f[c++];
    for (auto& v : r.reading.state.velocity) v = f[c++];
    for (auto& v : r.reading.sensors.tension) v = f[c++];
    for (auto& v : r.reading.sensors.loadcell) v = f[c++];
    for (auto& v : r.command.delta) v = f[c++];
    r.flags = static_cast<int>(f[c++]);
    if (r.flags & kFlagDropped) log.truncated = true;
    if (!log.records.empty() && r.tick != log.records.back().tick + 1) {
      throw InvalidInput(path + ": ticks are not consecutive");
    }
    log.records.push_back(r);
  }
  return log;
}

PairSet BuildPairs(const CollectionLog& log, std::size_t horizon) {
  const std::size_t n = log.records.size();
  if (horizon == 0 || n < horizon + 1) {
    throw InvalidInput("log too short for windows of T+1 ticks");
  }
  std::vector<Scaled> scaled;
  scaled.reserve(n);
  for (const auto& r : log.records) scaled.push_back(ScaleToModel(r.reading));

  const std::size_t count = n - horizon;
  const auto in_dim = static_cast<Eigen::Index>(kSensorDim + kStateDim +
                                                kControlDim * horizon);
  const auto out_dim = static_cast<Eigen::Index>(kSensorDim * horizon);
  PairSet set;
  set.x.resize(in_dim, static_cast<Eigen::Index>(count));
  set.y.resize(out_dim, static_cast<Eigen::Index>(count));
  for (std::size_t t = 0; t < count; ++t) {
    const auto col = static_cast<Eigen::Index>(t);
    Eigen::Index row = 0;
    for (double v : scaled[t].sensors.Flatten()) set.x(row++, col) = v;
    for (double v : scaled[t].state.Flatten()) set.x(row++, col) = v;
    for (std::size_t k = 0; k < horizon; ++k) {
      for (double v : log.records[t + k].command.delta) {
        set.x(row++, col) = ScaleLength(v);
      }
    }
    row = 0;
    for (std::size_t k = 1; k <= horizon; ++k) {
      for (double v : scaled[t + k].sensors.Flatten()) set.y(row++, col) = v;
    }
  }
  return set;
}

std::pair<PairSet, PairSet> Split(const PairSet& pairs, double train_ratio,
                                  std::uint64_t seed) {
  const std::size_t n = pairs.size();
  if (n < 5) throw InvalidInput("need at least 5 pairs to split");
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) {
    throw InvalidInput("train ratio must be in (0, 1)");
  }
  // round before ceil so 0.8 * 890 lands on 712, not 713
  const double exact = train_ratio * static_cast<double>(n);
  const auto n_train = static_cast<std::size_t>(std::ceil(exact - 1e-9));

  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(DeriveSeed(seed, Stream::kSplit));
  std::shuffle(idx.begin(), idx.end(), rng);

  auto take = [&](std::size_t begin, std::size_t end) {
    PairSet s;
    s.x.resize(pairs.x.rows(), static_cast<Eigen::Index>(end - begin));
    s.y.resize(pairs.y.rows(), static_cast<Eigen::Index>(end - begin));
    for (std::size_t i = begin; i < end; ++i) {
      s.x.col(static_cast<Eigen::Index>(i - begin)) = pairs.x.col(idx[i]);
      s.y.col(static_cast<Eigen::Index>(i - begin)) = pairs.y.col(idx[i]);
    }
    return s;
  };
  return {take(0, n_train), take(n_train, n)};
}

PairSet Concatenate(const PairSet& a, const PairSet& b) {
  if (a.size() == 0) return b;
  if (b.size() == 0) return a;
  if (a.x.rows() != b.x.rows() || a.y.rows() != b.y.rows()) {
    throw ShapeError("pair sets have different dimensions");
  }
  PairSet out;
  out.x.resize(a.x.rows(), a.x.cols() + b.x.cols());
  out.y.resize(a.y.rows(), a.y.cols() + b.y.cols());
  out.x << a.x, b.x;
  out.y << a.y, b.y;
  return out;
}

TrainingRun TrainOnLog(const CollectionLog& log, const TrainConfig& cfg,
                       double train_ratio) {
  auto [train, test] = Split(BuildPairs(log), train_ratio, cfg.seed);
  TrainingRun run{PredictiveModel::Default(cfg.seed), {}, train.size(),
                  test.size()};
  run.curve = Train(run.model, train.x, train.y, test.x, test.y, cfg);
  return run;
}

}  // namespace gstab
