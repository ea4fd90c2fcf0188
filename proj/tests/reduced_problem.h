// Small stabilizer problem (1 muscle, T = 2) with an exhaustive grid oracle.
// Shared by the unit tests and the acceptance binary.
#ifndef GSTAB_TESTS_REDUCED_PROBLEM_H_
#define GSTAB_TESTS_REDUCED_PROBLEM_H_

#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Dense>

#include "gstab/network.h"
#include "gstab/stabilizer.h"

namespace gstab::testing {

struct ReducedProblem {
  ProblemDims dims{2, 2, 1, 2};  // s = (F, C), i = (l, l_dot), one muscle
  StabilizerConfig cfg;
  PredictiveModel model;
};

struct ReducedInstance {
  Eigen::VectorXd current;  // (F, C, l, l_dot)
  Eigen::VectorXd keep;     // keep state replicated over T
  Eigen::VectorXd sent;
};

// Toy plant: tension follows the command, contact follows tension with a
// small leak.
inline Eigen::VectorXd ReducedPlant(const Eigen::VectorXd& x) {
  Eigen::VectorXd y(4);
  double f = x[0], c = x[1];
  for (int k = 0; k < 2; ++k) {
    const double u = x[4 + k];
    f = 0.7 * f + 0.3 * (0.2 + 0.25 * u);
    c = 0.8 * c + 0.2 * (0.5 * f + 0.1) - 0.02;
    y[2 * k] = f;
    y[2 * k + 1] = c;
  }
  return y;
}

inline ReducedProblem MakeReducedProblem(std::uint64_t seed) {
  ReducedProblem p;
  p.cfg.constant_candidates = 13;
  p.cfg.warm_candidates = 13;
  p.model = PredictiveModel({p.dims.input(), 16, 16, p.dims.output()}, seed);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> s(0.0, 0.8), u(p.cfg.u_min, p.cfg.u_max),
      l(-0.5, 2.0), v(-0.2, 0.2);
  const int n = 600;
  Eigen::MatrixXd x(p.dims.input(), n), y(p.dims.output(), n);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd xi(6);
    xi << s(rng), s(rng), l(rng), v(rng), u(rng), u(rng);
    x.col(i) = xi;
    y.col(i) = ReducedPlant(xi);
  }
  TrainConfig tc;
  tc.epochs = 150;
  tc.seed = seed;
  Train(p.model, x, y, Eigen::MatrixXd(6, 0), Eigen::MatrixXd(4, 0), tc);
  return p;
}

inline ReducedInstance RandomReducedInstance(const ReducedProblem& p,
                                             std::mt19937_64& rng) {
  std::uniform_real_distribution<double> s(0.05, 0.7), u(p.cfg.u_min, p.cfg.u_max);
  ReducedInstance in;
  in.current.resize(4);
  in.current << s(rng), s(rng), u(rng), 0.1 * u(rng);
  Eigen::VectorXd k(2);
  k << s(rng), s(rng);
  in.keep = k.replicate(2, 1);
  in.sent = Eigen::VectorXd::Constant(1, u(rng));
  return in;
}

inline double ReducedLoss(const ReducedProblem& p, const ReducedInstance& in,
                          const Eigen::VectorXd& u_seq) {
  Eigen::VectorXd x(p.dims.input());
  x << in.current, u_seq;
  return OptLoss(p.model.Forward(x), in.keep, u_seq, p.dims, p.cfg);
}

// Exhaustive search over the free element u_{t+1}; the head stays at sent.
inline double GridMinimum(const ReducedProblem& p, const ReducedInstance& in,
                          double step = 0.05) {
  double best = std::numeric_limits<double>::infinity();
  const int n = static_cast<int>(std::lround((p.cfg.u_max - p.cfg.u_min) / step));
  for (int i = 0; i <= n; ++i) {
    Eigen::VectorXd u(2);
    u << in.sent[0], p.cfg.u_min + step * i;
    best = std::min(best, ReducedLoss(p, in, u));
  }
  return best;
}

}  // namespace gstab::testing

#endif  // GSTAB_TESTS_REDUCED_PROBLEM_H_
