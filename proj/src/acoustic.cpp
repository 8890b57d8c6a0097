#include "sfaguard/acoustic.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "sfaguard/error.hpp"
#include "sfaguard/rng.hpp"

namespace sfaguard {

namespace {

void check_input(const Matrix& feats) {
  if (feats.cols() != kFeatureDim) throw InvalidArgument("acoustic model expects 39 feature columns");
}

void check_labels(const Matrix& feats, std::span<const int> labels) {
  check_input(feats);
  if (static_cast<Eigen::Index>(labels.size()) != feats.rows()) throw InvalidArgument("one label per frame required");
  for (int l : labels) {
    if (l < 0 || l >= kNumStates) throw InvalidArgument("frame label outside [0, 95)");
  }
}

Eigen::MatrixXd glorot(int out, int in, Rng& rng) {
  const double limit = std::sqrt(6.0 / (in + out));
  Eigen::MatrixXd w(out, in);
  for (int i = 0; i < out; ++i) {
    for (int j = 0; j < in; ++j) w(i, j) = rng.uniform(-limit, limit);
  }
  return w;
}

struct Activations {
  Matrix h1, h2, log_probs;
};

Activations run(const MlpModel& m, const Matrix& x) {
  Activations a;
  a.h1 = ((x * m.w1.transpose()).rowwise() + m.b1.transpose()).cwiseMax(0.0);
  a.h2 = ((a.h1 * m.w2.transpose()).rowwise() + m.b2.transpose()).cwiseMax(0.0);
  Matrix z = (a.h2 * m.w3.transpose()).rowwise() + m.b3.transpose();
  for (Eigen::Index t = 0; t < z.rows(); ++t) {
    const double mx = z.row(t).maxCoeff();
    const double lse = mx + std::log((z.row(t).array() - mx).exp().sum());
    z.row(t).array() -= lse;
  }
  a.log_probs = std::move(z);
  return a;
}

template <class F>
void for_each_param(MlpParams& p, F&& f) {
  f(p.w1);
  f(p.w2);
  f(p.w3);
  f(p.b1);
  f(p.b2);
  f(p.b3);
}

void write_block(std::ostream& out, const double* data, std::size_t n) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
}

void read_block(std::istream& in, double* data, std::size_t n) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw FormatError("checkpoint truncated");
}

template <class M>
void write_matrix(std::ostream& out, const M& m) {
  write_block(out, m.data(), static_cast<std::size_t>(m.size()));
}

template <class M>
void read_matrix(std::istream& in, M& m) {
  read_block(in, m.data(), static_cast<std::size_t>(m.size()));
}

constexpr char kMagic[8] = {'S', 'F', 'A', 'G', 'M', 'L', 'P', '1'};

}  // namespace

MlpModel MlpModel::initialize(std::uint64_t seed) {
  Rng rng(seed);
  MlpModel m;
  m.seed = seed;
  m.w1 = glorot(kHiddenDim, kFeatureDim, rng);
  m.w2 = glorot(kHiddenDim, kHiddenDim, rng);
  m.w3 = glorot(kNumStates, kHiddenDim, rng);
  m.b1 = Eigen::VectorXd::Zero(kHiddenDim);
  m.b2 = Eigen::VectorXd::Zero(kHiddenDim);
  m.b3 = Eigen::VectorXd::Zero(kNumStates);
  return m;
}

MlpModel MlpModel::zeros() {
  MlpModel m;
  m.w1 = Eigen::MatrixXd::Zero(kHiddenDim, kFeatureDim);
  m.w2 = Eigen::MatrixXd::Zero(kHiddenDim, kHiddenDim);
  m.w3 = Eigen::MatrixXd::Zero(kNumStates, kHiddenDim);
  m.b1 = Eigen::VectorXd::Zero(kHiddenDim);
  m.b2 = Eigen::VectorXd::Zero(kHiddenDim);
  m.b3 = Eigen::VectorXd::Zero(kNumStates);
  return m;
}

std::size_t MlpModel::parameter_count() const {
  return static_cast<std::size_t>(w1.size() + w2.size() + w3.size() + b1.size() + b2.size() + b3.size());
}

MlpParams MlpParams::zeros_like(const MlpModel& m) {
  MlpParams p;
  p.w1 = Eigen::MatrixXd::Zero(m.w1.rows(), m.w1.cols());
  p.w2 = Eigen::MatrixXd::Zero(m.w2.rows(), m.w2.cols());
  p.w3 = Eigen::MatrixXd::Zero(m.w3.rows(), m.w3.cols());
  p.b1 = Eigen::VectorXd::Zero(m.b1.size());
  p.b2 = Eigen::VectorXd::Zero(m.b2.size());
  p.b3 = Eigen::VectorXd::Zero(m.b3.size());
  return p;
}

double MlpParams::squared_norm() const {
  return w1.squaredNorm() + w2.squaredNorm() + w3.squaredNorm() + b1.squaredNorm() + b2.squaredNorm() +
         b3.squaredNorm();
}

AdamState AdamState::for_model(const MlpModel& m) {
  AdamState s;
  s.first_moment = MlpParams::zeros_like(m);
  s.second_moment = MlpParams::zeros_like(m);
  return s;
}

Matrix forward(const MlpModel& model, const Matrix& feats) {
  check_input(feats);
  return run(model, feats).log_probs;
}

LossGradients loss_and_gradients(const MlpModel& m, const Matrix& x, std::span<const int> labels, bool want_params,
                                 bool want_input) {
  check_labels(x, labels);
  const Activations a = run(m, x);
  LossGradients g;
  // dL/dz = softmax - onehot.
  Matrix dz = a.log_probs.array().exp().matrix();
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    const int s = labels[static_cast<std::size_t>(t)];
    g.loss -= a.log_probs(t, s);
    dz(t, s) -= 1.0;
  }
  Matrix dh2 = dz * m.w3;
  dh2.array() *= (a.h2.array() > 0.0).cast<double>();
  Matrix dh1 = dh2 * m.w2;
  dh1.array() *= (a.h1.array() > 0.0).cast<double>();
  if (want_params) {
    g.params.w3 = dz.transpose() * a.h2;
    g.params.b3 = dz.colwise().sum().transpose();
    g.params.w2 = dh2.transpose() * a.h1;
    g.params.b2 = dh2.colwise().sum().transpose();
    g.params.w1 = dh1.transpose() * x;
    g.params.b1 = dh1.colwise().sum().transpose();
  }
  if (want_input) g.input = dh1 * m.w1;
  return g;
}

Matrix input_grad(const MlpModel& model, const Matrix& feats, std::span<const int> labels) {
  return loss_and_gradients(model, feats, labels, false, true).input;
}

double cross_entropy(const MlpModel& model, const Matrix& feats, std::span<const int> labels) {
  check_labels(feats, labels);
  const Matrix lp = run(model, feats).log_probs;
  double loss = 0.0;
  for (Eigen::Index t = 0; t < lp.rows(); ++t) loss -= lp(t, labels[static_cast<std::size_t>(t)]);
  return loss;
}

double train_step(MlpModel& model, AdamState& adam, const Matrix& batch, std::span<const int> labels) {
  if (batch.rows() == 0) throw InvalidArgument("train_step: empty batch");
  LossGradients g = loss_and_gradients(model, batch, labels, true, false);
  const double inv_n = 1.0 / static_cast<double>(batch.rows());
  adam.step += 1;
  const double c1 = 1.0 - std::pow(adam.beta1, static_cast<double>(adam.step));
  const double c2 = 1.0 - std::pow(adam.beta2, static_cast<double>(adam.step));
  auto update = [&](auto& param, auto& grad, auto& m1, auto& m2) {
    grad *= inv_n;
    m1 = adam.beta1 * m1 + (1.0 - adam.beta1) * grad;
    m2 = adam.beta2 * m2 + (1.0 - adam.beta2) * grad.cwiseProduct(grad);
    param.array() -= adam.lr * (m1.array() / c1) / ((m2.array() / c2).sqrt() + adam.epsilon);
  };
  update(model.w1, g.params.w1, adam.first_moment.w1, adam.second_moment.w1);
  update(model.w2, g.params.w2, adam.first_moment.w2, adam.second_moment.w2);
  update(model.w3, g.params.w3, adam.first_moment.w3, adam.second_moment.w3);
  update(model.b1, g.params.b1, adam.first_moment.b1, adam.second_moment.b1);
  update(model.b2, g.params.b2, adam.first_moment.b2, adam.second_moment.b2);
  update(model.b3, g.params.b3, adam.first_moment.b3, adam.second_moment.b3);
  return g.loss * inv_n;
}

void write_checkpoint(std::ostream& out, const MlpModel& model, const AdamState& adam) {
  out.write(kMagic, sizeof kMagic);
  const std::int64_t shapes[7] = {3, kFeatureDim, kHiddenDim, kHiddenDim, kHiddenDim, kHiddenDim, kNumStates};
  out.write(reinterpret_cast<const char*>(shapes), sizeof shapes);
  MlpParams as_params{model.w1, model.w2, model.w3, model.b1, model.b2, model.b3};
  for (const MlpParams* p : {static_cast<const MlpParams*>(&as_params), &adam.first_moment, &adam.second_moment}) {
    write_matrix(out, p->w1);
    write_matrix(out, p->w2);
    write_matrix(out, p->w3);
    write_matrix(out, p->b1);
    write_matrix(out, p->b2);
    write_matrix(out, p->b3);
  }
  const double hyper[4] = {adam.lr, adam.beta1, adam.beta2, adam.epsilon};
  write_block(out, hyper, 4);
  const std::int64_t step = adam.step;
  const std::uint64_t seed = model.seed;
  out.write(reinterpret_cast<const char*>(&step), sizeof step);
  out.write(reinterpret_cast<const char*>(&seed), sizeof seed);
  if (!out) throw IoError("failed writing checkpoint");
}

void read_checkpoint(std::istream& in, MlpModel& model, AdamState& adam) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw FormatError("not an MLP checkpoint");
  std::int64_t shapes[7];
  in.read(reinterpret_cast<char*>(shapes), sizeof shapes);
  const std::int64_t expected[7] = {3, kFeatureDim, kHiddenDim, kHiddenDim, kHiddenDim, kHiddenDim, kNumStates};
  if (!in || std::memcmp(shapes, expected, sizeof shapes) != 0) throw FormatError("checkpoint layer shapes mismatch");
  model = MlpModel::zeros();
  adam = AdamState::for_model(model);
  MlpParams as_params = MlpParams::zeros_like(model);
  for (MlpParams* p : {&as_params, &adam.first_moment, &adam.second_moment}) {
    for_each_param(*p, [&](auto& m) { read_matrix(in, m); });
  }
  model.w1 = as_params.w1;
  model.w2 = as_params.w2;
  model.w3 = as_params.w3;
  model.b1 = as_params.b1;
  model.b2 = as_params.b2;
  model.b3 = as_params.b3;
  double hyper[4];
  read_block(in, hyper, 4);
  adam.lr = hyper[0];
  adam.beta1 = hyper[1];
  adam.beta2 = hyper[2];
  adam.epsilon = hyper[3];
  std::int64_t step = 0;
  std::uint64_t seed = 0;
  in.read(reinterpret_cast<char*>(&step), sizeof step);
  in.read(reinterpret_cast<char*>(&seed), sizeof seed);
  if (!in) throw FormatError("checkpoint truncated");
  adam.step = step;
  model.seed = seed;
}

}  // namespace sfaguard
