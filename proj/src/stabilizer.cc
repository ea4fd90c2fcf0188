#include "gstab/stabilizer.h"

#include <chrono>
#include <cmath>
#include <limits>

namespace gstab {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

VectorXd ClampToBounds(const VectorXd& u, const StabilizerConfig& cfg) {
  return u.cwiseMax(cfg.u_min).cwiseMin(cfg.u_max);
}

void CheckDims(const VectorXd& pred, const VectorXd& keep, int horizon) {
  if (pred.size() != keep.size()) throw ShapeError("pred/keep length mismatch");
  if (horizon <= 0 || pred.size() % horizon != 0) {
    throw ShapeError("sequence length is not a multiple of T");
  }
}

// Lowest index wins ties; NaN losses never win.
int ArgMin(const std::vector<double>& losses) {
  int best = -1;
  for (int i = 0; i < static_cast<int>(losses.size()); ++i) {
    if (!std::isfinite(losses[i])) continue;
    if (best < 0 || losses[i] < losses[best]) best = i;
  }
  return best;
}

std::vector<double> BatchLosses(const PredictiveModel& model,
                                const VectorXd& current, const VectorXd& keep,
                                const MatrixXd& candidates,
                                const ProblemDims& dims,
                                const StabilizerConfig& cfg) {
  MatrixXd x(dims.input(), candidates.cols());
  x.topRows(current.size()) = current.replicate(1, candidates.cols());
  x.bottomRows(candidates.rows()) = candidates;
  MatrixXd pred = model.Forward(x);
  std::vector<double> losses(static_cast<std::size_t>(candidates.cols()));
  for (Eigen::Index c = 0; c < candidates.cols(); ++c) {
    losses[static_cast<std::size_t>(c)] =
        OptLoss(pred.col(c), keep, candidates.col(c), dims, cfg);
  }
  return losses;
}

}  // namespace

void StabilizerConfig::Validate() const {
  if (warm_candidates < 0 || constant_candidates < 0 ||
      warm_candidates + constant_candidates < 1) {
    throw InvalidInput("need at least one initial candidate");
  }
  if (constant_candidates == 1) {
    throw InvalidInput("constant grid needs at least two points");
  }
  if (!(input_weight >= 0.0) || !(smooth_weight >= 0.0)) {
    throw InvalidInput("penalty weights must be non-negative");
  }
  if (!(contact_loss_gain > 1.0)) throw InvalidInput("C_loss must exceed 1");
  if (!(step_max > 0.0) || step_batch < 2 || epochs < 0) {
    throw InvalidInput("bad step-size batch");
  }
  if (!(noise_half_width >= 0.0)) throw InvalidInput("noise width must be >= 0");
  if (!(u_min < u_max)) throw InvalidInput("u_min must be below u_max");
}

double GraspLoss(const VectorXd& pred, const VectorXd& keep, int horizon,
                 double c_loss) {
  CheckDims(pred, keep, horizon);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - keep[i];
    sum += (d >= 0.0 ? 1.0 : c_loss) * d * d;
  }
  return sum / horizon;
}

VectorXd GraspLossGradient(const VectorXd& pred, const VectorXd& keep,
                           int horizon, double c_loss) {
  CheckDims(pred, keep, horizon);
  VectorXd g(pred.size());
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - keep[i];
    g[i] = 2.0 * (d >= 0.0 ? 1.0 : c_loss) * d / horizon;
  }
  return g;
}

double InputPenalty(const VectorXd& u_seq, int control,
                    const StabilizerConfig& cfg) {
  if (control <= 0 || u_seq.size() % control != 0) {
    throw ShapeError("control sequence length is not a multiple of the input size");
  }
  const Eigen::Index n = u_seq.size();
  double adj = 0.0;
  if (n > control) {
    adj = (u_seq.head(n - control) - u_seq.tail(n - control)).squaredNorm();
  }
  return cfg.input_weight * u_seq.squaredNorm() + cfg.smooth_weight * adj;
}

VectorXd InputPenaltyGradient(const VectorXd& u_seq, int control,
                              const StabilizerConfig& cfg) {
  if (control <= 0 || u_seq.size() % control != 0) {
    throw ShapeError("control sequence length is not a multiple of the input size");
  }
  const Eigen::Index n = u_seq.size();
  VectorXd g = 2.0 * cfg.input_weight * u_seq;
  if (n > control) {
    VectorXd diff = u_seq.head(n - control) - u_seq.tail(n - control);
    g.head(n - control) += 2.0 * cfg.smooth_weight * diff;
    g.tail(n - control) -= 2.0 * cfg.smooth_weight * diff;
  }
  return g;
}

double OptLoss(const VectorXd& pred, const VectorXd& keep, const VectorXd& u_seq,
               const ProblemDims& dims, const StabilizerConfig& cfg) {
  if (u_seq.size() != dims.sequence()) throw ShapeError("control sequence size");
  if (pred.size() != dims.output()) throw ShapeError("prediction size");
  return GraspLoss(pred, keep, dims.horizon, cfg.contact_loss_gain) +
         InputPenalty(u_seq, dims.control, cfg);
}

double GraspLoss(const SensorSequence& pred, const SensorSequence& keep,
                 double c_loss) {
  if (pred.size() != keep.size() || pred.empty()) {
    throw ShapeError("sensor sequences must have equal non-zero length");
  }
  std::vector<double> p = Flatten(pred), k = Flatten(keep);
  return GraspLoss(Eigen::Map<VectorXd>(p.data(), static_cast<Eigen::Index>(p.size())),
                   Eigen::Map<VectorXd>(k.data(), static_cast<Eigen::Index>(k.size())),
                   static_cast<int>(pred.size()), c_loss);
}

double OptLoss(const SensorSequence& pred, const SensorSequence& keep,
               const ControlSequence& u_seq, const StabilizerConfig& cfg) {
  if (u_seq.size() != pred.size()) throw ShapeError("u and s sequence lengths differ");
  std::vector<double> u = FlattenScaled(u_seq);
  return GraspLoss(pred, keep, cfg.contact_loss_gain) +
         InputPenalty(Eigen::Map<VectorXd>(u.data(), static_cast<Eigen::Index>(u.size())),
                      static_cast<int>(kControlDim), cfg);
}

SensorSequence KeepState::Sequence(std::size_t horizon) const {
  return SensorSequence(horizon, keep);
}

VectorXd KeepState::Flat(std::size_t horizon) const {
  auto s = keep.Flatten();
  VectorXd one = Eigen::Map<const VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
  return one.replicate(static_cast<Eigen::Index>(horizon), 1);
}

MatrixXd InitCandidates(const std::optional<VectorXd>& previous,
                        const ProblemDims& dims, const StabilizerConfig& cfg,
                        std::mt19937_64& rng) {
  const int n_seq = dims.sequence();
  MatrixXd out(n_seq, cfg.constant_candidates + cfg.warm_candidates);
  for (int i = 0; i < cfg.constant_candidates; ++i) {
    const double v = cfg.u_min + (cfg.u_max - cfg.u_min) * i /
                                     (cfg.constant_candidates - 1);
    out.col(i).setConstant(v);
  }
  VectorXd prev = previous.value_or(VectorXd::Zero(n_seq));
  if (prev.size() != n_seq) throw ShapeError("previous optimum has wrong size");
  // shift one step forward and replicate the last element
  VectorXd shifted(n_seq);
  const int c = dims.control;
  shifted.head(n_seq - c) = prev.tail(n_seq - c);
  shifted.tail(c) = prev.tail(c);
  std::uniform_real_distribution<double> noise(-cfg.noise_half_width,
                                                cfg.noise_half_width);
  for (int i = 0; i < cfg.warm_candidates; ++i) {
    VectorXd cand = shifted;
    if (cfg.noise_half_width > 0.0) {
      for (int j = 0; j < n_seq; ++j) cand[j] += noise(rng);
    }
    out.col(cfg.constant_candidates + i) = ClampToBounds(cand, cfg);
  }
  return out;
}

std::vector<ControlSequence> InitCandidates(
    const std::optional<ControlSequence>& previous, const StabilizerConfig& cfg,
    std::mt19937_64& rng) {
  std::optional<VectorXd> prev;
  if (previous) {
    if (previous->size() != kHorizon) throw ShapeError("previous sequence needs T=10");
    std::vector<double> flat = FlattenScaled(*previous);
    prev = Eigen::Map<VectorXd>(flat.data(), static_cast<Eigen::Index>(flat.size()));
  }
  MatrixXd m = InitCandidates(prev, ProblemDims{}, cfg, rng);
  std::vector<ControlSequence> out;
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    VectorXd col = m.col(c);
    out.push_back(UnflattenScaled(std::span<const double>(col.data(), col.size())));
  }
  return out;
}

VectorXd OptLossGradient(const PredictiveModel& model, const VectorXd& current,
                         const VectorXd& keep, const VectorXd& u_seq,
                         const ProblemDims& dims, const StabilizerConfig& cfg) {
  VectorXd x(dims.input());
  x << current, u_seq;
  VectorXd pred = model.Forward(x);
  VectorXd dy = GraspLossGradient(pred, keep, dims.horizon, cfg.contact_loss_gain);
  VectorXd dx = model.GradInput(x, dy);
  VectorXd g = dx.tail(dims.sequence()) + InputPenaltyGradient(u_seq, dims.control, cfg);
  g.head(dims.control).setZero();
  return g;
}

TickResult OptimizeTick(const PredictiveModel& model, const VectorXd& current,
                        const VectorXd& keep,
                        const std::optional<VectorXd>& previous,
                        const VectorXd& sent, const ProblemDims& dims,
                        const StabilizerConfig& cfg, std::mt19937_64& rng) {
  if (model.mode() != Mode::kInference) {
    throw ModeError("the stabilizer needs the model in inference mode");
  }
  if (model.input_dim() != dims.input() || model.output_dim() != dims.output()) {
    throw ShapeError("model does not match the problem dimensions");
  }
  if (current.size() != dims.sensor + dims.state) throw ShapeError("current state size");
  if (keep.size() != dims.output()) throw ShapeError("keep sequence size");
  if (sent.size() != dims.control) throw ShapeError("sent input size");
  if (dims.horizon < 2) throw ShapeError("need T >= 2 to emit u_{t+1}");

  TickResult result;
  TickDiagnostics& diag = result.diagnostics;
  auto fail = [&](const std::string& why) {
    diag.ok = false;
    diag.error = why;
    result.next = sent;
    result.sequence = previous.value_or(sent.replicate(dims.horizon, 1));
    return result;
  };

  MatrixXd candidates = InitCandidates(previous, dims, cfg, rng);
  for (Eigen::Index c = 0; c < candidates.cols(); ++c) {
    candidates.col(c).head(dims.control) = sent;
  }
  std::vector<double> losses = BatchLosses(model, current, keep, candidates, dims, cfg);
  const int best = ArgMin(losses);
  if (best < 0) return fail("non-finite loss for every initial candidate");
  diag.candidate = best;
  VectorXd u = candidates.col(best);
  double loss = losses[static_cast<std::size_t>(best)];
  diag.loss_trace.push_back(loss);

  MatrixXd batch(dims.sequence(), cfg.step_batch);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    VectorXd g = OptLossGradient(model, current, keep, u, dims, cfg);
    const double norm = g.norm();
    if (!std::isfinite(norm)) return fail("non-finite gradient");
    if (norm == 0.0) {
      diag.loss_trace.push_back(loss);
      diag.step_sizes.push_back(0.0);
      continue;
    }
    const VectorXd dir = g / norm;
    for (int k = 0; k < cfg.step_batch; ++k) {
      const double gamma = cfg.step_max * k / (cfg.step_batch - 1);
      batch.col(k) = ClampToBounds(u - gamma * dir, cfg);
    }
    std::vector<double> step_losses = BatchLosses(model, current, keep, batch, dims, cfg);
    const int k = ArgMin(step_losses);
    if (k < 0) return fail("non-finite loss over the step-size batch");
    u = batch.col(k);
    loss = step_losses[static_cast<std::size_t>(k)];
    diag.loss_trace.push_back(loss);
    diag.step_sizes.push_back(cfg.step_max * k / (cfg.step_batch - 1));
  }
  // the head is pinned to the value already sent
  u.head(dims.control) = sent;
  result.sequence = u;
  result.next = u.segment(dims.control, dims.control);
  return result;
}

double EvalLoss(const SensorState& current, const SensorState& keep, double c_loss) {
  auto c = current.Flatten();
  auto k = keep.Flatten();
  double sum = 0.0;
  for (std::size_t j = 0; j < c.size(); ++j) {
    const double d = c[j] - k[j];
    sum += (d >= 0.0 ? 1.0 : c_loss) * d * d;
  }
  return sum;
}

ExperimentLog RunStabilized(HandSim& sim, const PredictiveModel* model,
                            const StabilizerConfig& cfg,
                            const DisturbanceSchedule& sched, double duration,
                            std::uint64_t seed) {
  cfg.Validate();
  if (model) {
    const std::vector<int> expected{static_cast<int>(kModelInputDim),
                                    static_cast<int>(kModelOutputDim)};
    if (model->input_dim() != expected[0] || model->output_dim() != expected[1]) {
      throw ShapeError("stabilizer needs a 61 -> 130 model");
    }
  }
  const ProblemDims dims;
  const long n_ticks = std::lround(duration * kControlRateHz);
  std::mt19937_64 rng(DeriveSeed(seed, Stream::kStabilizer));
  DropDetector drop(sim.config());

  ExperimentLog log;
  KeepState keep;
  VectorXd keep_flat;
  std::optional<VectorXd> previous;
  VectorXd sent = VectorXd::Zero(dims.control);

  for (long tick = 0; tick < n_ticks; ++tick) {
    TickRecord rec;
    rec.tick = tick;
    rec.time = static_cast<double>(tick) * kControlPeriod;
    rec.raw = sim.Read();
    const Scaled scaled = ScaleToModel(rec.raw);
    rec.scaled = scaled.sensors;
    if (tick == 0) {
      keep.keep = scaled.sensors;
      keep_flat = keep.Flat();
      log.keep = keep.keep;
    }
    rec.eval_loss = EvalLoss(scaled.sensors, keep.keep, cfg.contact_loss_gain);
    for (int k = 0; k < dims.control; ++k) {
      rec.applied.delta[static_cast<std::size_t>(k)] = UnscaleLength(sent[k]);
    }

    if (drop.Update(rec.time, rec.raw.sensors)) {
      rec.flags |= kTickFlagDropped;
      rec.next = rec.applied;
      log.ticks.push_back(rec);
      log.dropped = true;
      log.drop_time = drop.onset();
      break;
    }

    VectorXd next = sent;
    if (model) {
      auto s = scaled.sensors.Flatten();
      auto i = scaled.state.Flatten();
      VectorXd current(dims.sensor + dims.state);
      for (int j = 0; j < dims.sensor; ++j) current[j] = s[static_cast<std::size_t>(j)];
      for (int j = 0; j < dims.state; ++j) {
        current[dims.sensor + j] = i[static_cast<std::size_t>(j)];
      }
      const auto t0 = std::chrono::steady_clock::now();
      TickResult r = OptimizeTick(*model, current, keep_flat, previous, sent, dims, cfg, rng);
      rec.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
      rec.diagnostics = r.diagnostics;
      if (r.diagnostics.ok) {
        next = r.next;
        previous = r.sequence;
      } else {
        rec.flags |= kTickFlagSolverError;
      }
    }
    for (int k = 0; k < dims.control; ++k) {
      rec.next.delta[static_cast<std::size_t>(k)] = UnscaleLength(next[k]);
    }
    log.ticks.push_back(rec);

    sim.Advance(ClampInput(rec.applied), sched);
    sent = next;
  }
  return log;
}

}  // namespace gstab
