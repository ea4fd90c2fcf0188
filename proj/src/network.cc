#include "gstab/network.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace gstab {
namespace {

constexpr const char* kMagic = "gstab-model";
constexpr int kFormatVersion = 1;

MatrixXd Sigmoid(const MatrixXd& z) {
  return (1.0 + (-z.array()).exp()).inverse().matrix();
}

std::string Format(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void WriteVector(std::ostream& out, const char* name, const VectorXd& v) {
  out << name << ' ' << v.size();
  for (Eigen::Index i = 0; i < v.size(); ++i) out << ' ' << Format(v[i]);
  out << '\n';
}

void WriteMatrix(std::ostream& out, const char* name, const MatrixXd& m) {
  out << name << ' ' << m.rows() << ' ' << m.cols();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << ' ' << Format(m(r, c));
  }
  out << '\n';
}

double ReadDouble(std::istream& in) {
  std::string tok;
  if (!(in >> tok)) throw ShapeError("checkpoint truncated");
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ShapeError("bad number in checkpoint: " + tok);
  }
  return v;
}

void Expect(std::istream& in, const std::string& word) {
  std::string tok;
  if (!(in >> tok) || tok != word) {
    throw ShapeError("checkpoint: expected '" + word + "', got '" + tok + "'");
  }
}

VectorXd ReadVector(std::istream& in, const char* name, Eigen::Index n) {
  Expect(in, name);
  Eigen::Index size = 0;
  in >> size;
  if (size != n) throw ShapeError(std::string("checkpoint: bad size for ") + name);
  VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = ReadDouble(in);
  return v;
}

MatrixXd ReadMatrix(std::istream& in, const char* name, Eigen::Index rows,
                    Eigen::Index cols) {
  Expect(in, name);
  Eigen::Index r = 0, c = 0;
  in >> r >> c;
  if (r != rows || c != cols) {
    throw ShapeError(std::string("checkpoint: bad shape for ") + name);
  }
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = ReadDouble(in);
  }
  return m;
}

}  // namespace

struct PredictiveModel::Tape {
  std::vector<MatrixXd> input;   // input to each layer
  std::vector<MatrixXd> xhat;    // normalized pre-activation
  std::vector<VectorXd> invstd;  // 1/sqrt(var + eps) per feature
  std::vector<MatrixXd> act;     // sigmoid output
};

PredictiveModel::PredictiveModel(std::vector<int> sizes, std::uint64_t seed)
    : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw ShapeError("model needs at least two layer sizes");
  for (int s : sizes_) {
    if (s <= 0) throw ShapeError("layer sizes must be positive");
  }
  std::mt19937_64 rng(DeriveSeed(seed, Stream::kInit));
  for (std::size_t i = 0; i + 1 < sizes_.size(); ++i) {
    const int in = sizes_[i], out = sizes_[i + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Layer l;
    l.weight.resize(out, in);
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) l.weight(r, c) = dist(rng);
    }
    l.bias.resize(out);
    for (int r = 0; r < out; ++r) l.bias[r] = dist(rng);
    l.scale = VectorXd::Ones(out);
    l.shift = VectorXd::Zero(out);
    l.running_mean = VectorXd::Zero(out);
    l.running_var = VectorXd::Ones(out);
    layers_.push_back(std::move(l));
  }
}

std::vector<int> PredictiveModel::DefaultSizes() {
  return {static_cast<int>(kModelInputDim), 100, 100, 100,
          static_cast<int>(kModelOutputDim)};
}

PredictiveModel PredictiveModel::Default(std::uint64_t seed) {
  return PredictiveModel(DefaultSizes(), seed);
}

void PredictiveModel::CheckInput(Eigen::Index rows) const {
  if (sizes_.empty()) throw ShapeError("empty model");
  if (rows != input_dim()) {
    throw ShapeError("model input has " + std::to_string(rows) +
                     " rows, expected " + std::to_string(input_dim()));
  }
}

MatrixXd PredictiveModel::Run(const MatrixXd& x, bool batch_stats,
                              Tape* tape) const {
  CheckInput(x.rows());
  MatrixXd a = x;
  const std::size_t last = layers_.size() - 1;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    MatrixXd z = (l.weight * a).colwise() + l.bias;
    if (tape) tape->input.push_back(a);
    if (i == last) {
      a = std::move(z);
      break;
    }
    VectorXd mean, var;
    if (batch_stats) {
      const double n = static_cast<double>(z.cols());
      mean = z.rowwise().mean();
      var = ((z.colwise() - mean).array().square().rowwise().sum() / n).matrix();
    } else {
      mean = l.running_mean;
      var = l.running_var;
    }
    VectorXd invstd = (var.array() + kNormEps).rsqrt().matrix();
    MatrixXd xhat = (z.colwise() - mean).array().colwise() * invstd.array();
    MatrixXd y = (xhat.array().colwise() * l.scale.array()).matrix().colwise() +
                 l.shift;
    a = Sigmoid(y);
    if (tape) {
      tape->xhat.push_back(std::move(xhat));
      tape->invstd.push_back(std::move(invstd));
      tape->act.push_back(a);
    }
  }
  return a;
}

MatrixXd PredictiveModel::Forward(const MatrixXd& x) const {
  return Run(x, mode_ == Mode::kTrain, nullptr);
}

VectorXd PredictiveModel::Forward(const VectorXd& x) const {
  MatrixXd m = x;
  return Forward(m).col(0);
}

ParamGrads PredictiveModel::GradParams(const MatrixXd& x,
                                       const MatrixXd& y) const {
  if (x.cols() == 0) throw ShapeError("empty minibatch");
  if (y.rows() != output_dim() || y.cols() != x.cols()) {
    throw ShapeError("target shape does not match model output");
  }
  Tape tape;
  MatrixXd pred = Run(x, true, &tape);
  const double count = static_cast<double>(pred.size());
  ParamGrads g;
  g.loss = (pred - y).squaredNorm() / count;
  g.layers.resize(layers_.size());

  MatrixXd d = 2.0 * (pred - y) / count;  // dL/d(output of current layer)
  const double n = static_cast<double>(x.cols());
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const Layer& l = layers_[i];
    LayerGrad& lg = g.layers[i];
    MatrixXd dz;
    if (i == layers_.size() - 1) {
      dz = d;
      lg.scale = VectorXd::Zero(l.scale.size());
      lg.shift = VectorXd::Zero(l.shift.size());
    } else {
      const MatrixXd& act = tape.act[i];
      const MatrixXd& xhat = tape.xhat[i];
      MatrixXd dy = d.array() * act.array() * (1.0 - act.array());
      lg.scale = (dy.array() * xhat.array()).rowwise().sum().matrix();
      lg.shift = dy.rowwise().sum();
      MatrixXd dxhat = dy.array().colwise() * l.scale.array();
      VectorXd sum_dxhat = dxhat.rowwise().sum();
      VectorXd sum_dxhat_xhat = (dxhat.array() * xhat.array()).rowwise().sum();
      // batch-norm backward through the batch mean and variance
      MatrixXd inner = (n * dxhat.array()).matrix().colwise() - sum_dxhat;
      inner -= (xhat.array().colwise() * sum_dxhat_xhat.array()).matrix();
      dz = (inner.array().colwise() * (tape.invstd[i].array() / n)).matrix();
    }
    lg.weight = dz * tape.input[i].transpose();
    lg.bias = dz.rowwise().sum();
    d = l.weight.transpose() * dz;
  }
  return g;
}

VectorXd PredictiveModel::GradInput(const VectorXd& x, const VectorXd& dy) const {
  if (mode_ != Mode::kInference) {
    throw ModeError("input gradients are defined in inference mode only");
  }
  if (dy.size() != output_dim()) throw ShapeError("dL/dy has wrong size");
  Tape tape;
  MatrixXd xm = x;
  Run(xm, false, &tape);
  VectorXd d = dy;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const Layer& l = layers_[i];
    VectorXd dz;
    if (i == layers_.size() - 1) {
      dz = d;
    } else {
      const VectorXd act = tape.act[i].col(0);
      dz = (d.array() * act.array() * (1.0 - act.array()) * l.scale.array() *
            tape.invstd[i].array())
               .matrix();
    }
    d = l.weight.transpose() * dz;
  }
  return d;
}

void PredictiveModel::UpdateRunningStats(const MatrixXd& x) {
  CheckInput(x.rows());
  MatrixXd a = x;
  const double n = static_cast<double>(x.cols());
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
    Layer& l = layers_[i];
    MatrixXd z = (l.weight * a).colwise() + l.bias;
    VectorXd mean = z.rowwise().mean();
    VectorXd ss = (z.colwise() - mean).array().square().rowwise().sum().matrix();
    l.running_mean = (1.0 - kMomentum) * l.running_mean + kMomentum * mean;
    // unbiased variance is undefined for one sample; keep the old estimate
    if (x.cols() > 1) {
      l.running_var = (1.0 - kMomentum) * l.running_var +
                      kMomentum * (ss / (n - 1.0));
    }
    VectorXd invstd = ((ss / n).array() + kNormEps).rsqrt().matrix();
    MatrixXd xhat = (z.colwise() - mean).array().colwise() * invstd.array();
    a = Sigmoid((xhat.array().colwise() * l.scale.array()).matrix().colwise() +
                l.shift);
  }
}

std::size_t PredictiveModel::ParameterCount() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    n += layers_[i].weight.size() + layers_[i].bias.size();
    if (i + 1 < layers_.size()) n += layers_[i].scale.size() + layers_[i].shift.size();
  }
  return n;
}

void PredictiveModel::Save(const std::string& path, const TrainConfig& train) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out << kMagic << ' ' << kFormatVersion << '\n';
  out << "sizes " << sizes_.size();
  for (int s : sizes_) out << ' ' << s;
  out << '\n';
  out << "scaling " << Format(kLengthScale) << ' ' << Format(kLoadcellScale) << ' '
      << Format(kTensionScale) << '\n';
  out << "norm " << Format(kNormEps) << ' ' << Format(kMomentum) << '\n';
  out << "train " << train.batch_size << ' ' << train.epochs << ' '
      << Format(train.learning_rate) << ' ' << train.seed << '\n';
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    out << "layer " << i << '\n';
    WriteMatrix(out, "weight", l.weight);
    WriteVector(out, "bias", l.bias);
    WriteVector(out, "scale", l.scale);
    WriteVector(out, "shift", l.shift);
    WriteVector(out, "running_mean", l.running_mean);
    WriteVector(out, "running_var", l.running_var);
  }
  out << "end\n";
  if (!out) throw std::runtime_error("failed writing checkpoint " + path);
}

PredictiveModel PredictiveModel::Load(const std::string& path,
                                      const std::vector<int>& expected_sizes) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  Expect(in, kMagic);
  int version = 0;
  in >> version;
  if (version != kFormatVersion) {
    throw ShapeError("unsupported checkpoint version " + std::to_string(version));
  }
  Expect(in, "sizes");
  std::size_t count = 0;
  in >> count;
  if (!in || count < 2 || count > 64) throw ShapeError("checkpoint: bad layer count");
  std::vector<int> sizes(count);
  for (auto& s : sizes) {
    in >> s;
    if (!in || s <= 0) throw ShapeError("checkpoint: bad layer size");
  }
  if (!expected_sizes.empty() && sizes != expected_sizes) {
    throw ShapeError("checkpoint layer sizes do not match the expected model");
  }
  Expect(in, "scaling");
  const double l = ReadDouble(in), c = ReadDouble(in), f = ReadDouble(in);
  if (l != kLengthScale || c != kLoadcellScale || f != kTensionScale) {
    throw ShapeError("checkpoint uses different unit scaling");
  }
  Expect(in, "norm");
  ReadDouble(in);
  ReadDouble(in);
  Expect(in, "train");
  std::string skip;
  for (int i = 0; i < 4; ++i) in >> skip;

  PredictiveModel m;
  m.sizes_ = sizes;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    Expect(in, "layer");
    std::size_t idx = 0;
    in >> idx;
    if (idx != i) throw ShapeError("checkpoint: layers out of order");
    Layer layer;
    layer.weight = ReadMatrix(in, "weight", sizes[i + 1], sizes[i]);
    layer.bias = ReadVector(in, "bias", sizes[i + 1]);
    layer.scale = ReadVector(in, "scale", sizes[i + 1]);
    layer.shift = ReadVector(in, "shift", sizes[i + 1]);
    layer.running_mean = ReadVector(in, "running_mean", sizes[i + 1]);
    layer.running_var = ReadVector(in, "running_var", sizes[i + 1]);
    m.layers_.push_back(std::move(layer));
  }
  Expect(in, "end");
  m.mode_ = Mode::kInference;
  return m;
}

double MseLoss(const VectorXd& pred, const VectorXd& target) {
  if (pred.size() != target.size()) throw ShapeError("mse: size mismatch");
  if (pred.size() == 0) throw ShapeError("mse: empty vectors");
  return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

double MseLoss(const MatrixXd& pred, const MatrixXd& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw ShapeError("mse: shape mismatch");
  }
  if (pred.size() == 0) throw ShapeError("mse: empty matrices");
  return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

namespace {

struct AdamSlot {
  MatrixXd m, v;
};

void AdamUpdate(Eigen::Ref<MatrixXd> param, const MatrixXd& grad, AdamSlot& slot,
                const TrainConfig& cfg, double bc1, double bc2) {
  if (slot.m.size() == 0) {
    slot.m = MatrixXd::Zero(grad.rows(), grad.cols());
    slot.v = MatrixXd::Zero(grad.rows(), grad.cols());
  }
  slot.m = cfg.beta1 * slot.m + (1.0 - cfg.beta1) * grad;
  slot.v = cfg.beta2 * slot.v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
  param.array() -= cfg.learning_rate * (slot.m.array() / bc1) /
                   ((slot.v.array() / bc2).sqrt() + cfg.adam_eps);
}

MatrixXd Columns(const MatrixXd& m, const std::vector<Eigen::Index>& idx,
                 std::size_t begin, std::size_t end) {
  MatrixXd out(m.rows(), static_cast<Eigen::Index>(end - begin));
  for (std::size_t i = begin; i < end; ++i) {
    out.col(static_cast<Eigen::Index>(i - begin)) = m.col(idx[i]);
  }
  return out;
}

}  // namespace

std::vector<EpochLoss> Train(PredictiveModel& model, const MatrixXd& train_x,
                             const MatrixXd& train_y, const MatrixXd& test_x,
                             const MatrixXd& test_y, const TrainConfig& cfg) {
  if (train_x.cols() == 0) throw InvalidInput("empty training set");
  if (train_x.cols() != train_y.cols() || test_x.cols() != test_y.cols()) {
    throw ShapeError("inputs and targets disagree on sample count");
  }
  if (train_x.rows() != model.input_dim() || train_y.rows() != model.output_dim()) {
    throw ShapeError("training data does not match model dimensions");
  }
  if (cfg.batch_size < 1 || cfg.epochs < 0) {
    throw InvalidInput("batch size and epochs must be positive");
  }
  std::mt19937_64 rng(DeriveSeed(cfg.seed, Stream::kShuffle));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(train_x.cols()));
  std::iota(order.begin(), order.end(), 0);

  const std::size_t n_layers = model.layers().size();
  std::vector<AdamSlot> slots(4 * n_layers);
  long step = 0;
  std::vector<EpochLoss> curve;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      MatrixXd bx = Columns(train_x, order, b, e);
      MatrixXd by = Columns(train_y, order, b, e);
      ParamGrads g = model.GradParams(bx, by);
      model.UpdateRunningStats(bx);
      ++step;
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < n_layers; ++i) {
        Layer& l = model.layers()[i];
        AdamUpdate(l.weight, g.layers[i].weight, slots[4 * i], cfg, bc1, bc2);
        AdamUpdate(l.bias, g.layers[i].bias, slots[4 * i + 1], cfg, bc1, bc2);
        if (i + 1 < n_layers) {
          AdamUpdate(l.scale, g.layers[i].scale, slots[4 * i + 2], cfg, bc1, bc2);
          AdamUpdate(l.shift, g.layers[i].shift, slots[4 * i + 3], cfg, bc1, bc2);
        }
      }
    }
    model.set_mode(Mode::kInference);
    EpochLoss el{epoch, MseLoss(model.Forward(train_x), train_y),
                 std::numeric_limits<double>::quiet_NaN()};
    if (test_x.cols() > 0) el.test = MseLoss(model.Forward(test_x), test_y);
    curve.push_back(el);
  }
  model.set_mode(Mode::kInference);
  return curve;
}

}  // namespace gstab
