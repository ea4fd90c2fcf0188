#ifndef GSTAB_NETWORK_H_
#define GSTAB_NETWORK_H_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gstab/types.h"

namespace gstab {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Thrown when an operation is called in the wrong train/inference mode.
class ModeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class Mode { kTrain, kInference };

// Fully connected layer with optional batch normalization and sigmoid.
struct Layer {
  MatrixXd weight;  // out x in
  VectorXd bias;
  // normalization; unused on the output layer
  VectorXd scale;
  VectorXd shift;
  VectorXd running_mean;
  VectorXd running_var;
};

struct LayerGrad {
  MatrixXd weight;
  VectorXd bias;
  VectorXd scale;
  VectorXd shift;
};

struct ParamGrads {
  std::vector<LayerGrad> layers;
  double loss = 0.0;
};

struct TrainConfig {
  int batch_size = 10;
  int epochs = 300;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
};

// Predictor s_[t+1,t+T] = f(s_t, i_t, u_[t,t+T-1]). Every layer but the last
// is Linear -> BatchNorm -> Sigmoid; the last is Linear only.
class PredictiveModel {
 public:
  static constexpr double kNormEps = 1e-8;
  static constexpr double kMomentum = 0.1;

  PredictiveModel() = default;
  // sizes = {input, hidden..., output}; weights uniform in +-1/sqrt(fan_in).
  PredictiveModel(std::vector<int> sizes, std::uint64_t seed);
  // 61 -> 100 -> 100 -> 100 -> 130
  static std::vector<int> DefaultSizes();
  static PredictiveModel Default(std::uint64_t seed);

  const std::vector<int>& sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  Mode mode() const { return mode_; }
  void set_mode(Mode m) { mode_ = m; }

  // Columns are samples. Train mode normalizes with the statistics of this
  // batch and does not touch the running statistics.
  MatrixXd Forward(const MatrixXd& x) const;
  VectorXd Forward(const VectorXd& x) const;

  // Gradient of the mean squared error over the batch (train mode
  // normalization, regardless of mode()).
  ParamGrads GradParams(const MatrixXd& x, const MatrixXd& y) const;

  // Vector-Jacobian product dL/dx given dL/dy. Inference mode only.
  VectorXd GradInput(const VectorXd& x, const VectorXd& dy) const;

  // Folds one minibatch's normalization statistics into the running ones.
  void UpdateRunningStats(const MatrixXd& x);

  // Number of scalar parameters (weights, biases, scales, shifts).
  std::size_t ParameterCount() const;

  // Text checkpoint. Doubles are written in shortest round-trip form so a
  // reload reproduces Forward bitwise.
  void Save(const std::string& path, const TrainConfig& train = {}) const;
  // Throws ShapeError when expected_sizes is non-empty and disagrees.
  static PredictiveModel Load(const std::string& path,
                              const std::vector<int>& expected_sizes = {});

 private:
  struct Tape;
  MatrixXd Run(const MatrixXd& x, bool batch_stats, Tape* tape) const;
  void CheckInput(Eigen::Index rows) const;

  std::vector<int> sizes_;
  std::vector<Layer> layers_;
  Mode mode_ = Mode::kInference;
};

// Mean of squared differences over every element.
double MseLoss(const VectorXd& pred, const VectorXd& target);
double MseLoss(const MatrixXd& pred, const MatrixXd& target);

struct EpochLoss {
  int epoch;
  double train;
  double test;  // NaN when no test set
};

// Adam on the mean squared error. Inputs/targets are stored as columns.
// Running statistics are updated from every minibatch. The returned curve
// holds inference-mode losses after each epoch. Leaves the model in
// inference mode.
std::vector<EpochLoss> Train(PredictiveModel& model, const MatrixXd& train_x,
                             const MatrixXd& train_y, const MatrixXd& test_x,
                             const MatrixXd& test_y, const TrainConfig& cfg);

}  // namespace gstab

#endif  // GSTAB_NETWORK_H_
