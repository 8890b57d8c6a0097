#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>

#include <Eigen/Dense>

#include "sfaguard/frontend.hpp"

namespace sfaguard {

inline constexpr int kHiddenDim = 100;
inline constexpr int kNumStates = 95;

/// 39 -> 100 -> 100 -> 95 with ReLU hidden layers and a log-softmax output.
/// Weights are stored out x in; inputs are frames-as-rows.
struct MlpModel {
  Eigen::MatrixXd w1, w2, w3;
  Eigen::VectorXd b1, b2, b3;
  std::uint64_t seed = 0;

  /// Glorot-uniform weights, zero biases.
  static MlpModel initialize(std::uint64_t seed);
  static MlpModel zeros();

  std::size_t parameter_count() const;
};

/// Same shapes as MlpModel; used for gradients and Adam moments.
struct MlpParams {
  Eigen::MatrixXd w1, w2, w3;
  Eigen::VectorXd b1, b2, b3;

  static MlpParams zeros_like(const MlpModel& m);
  double squared_norm() const;
};

struct AdamState {
  MlpParams first_moment;
  MlpParams second_moment;
  std::int64_t step = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_model(const MlpModel& m);
};

/// T x 95 frame-wise log posteriors.
Matrix forward(const MlpModel& model, const Matrix& feats);

/// Mean cross-entropy of the batch before the update, then one bias-corrected
/// Adam step.
double train_step(MlpModel& model, AdamState& adam, const Matrix& batch, std::span<const int> labels);

struct LossGradients {
  double loss = 0.0;  // summed over frames
  MlpParams params;
  Matrix input;       // T x 39
};

/// Summed frame cross-entropy and its gradients with respect to parameters
/// and inputs.
LossGradients loss_and_gradients(const MlpModel& model, const Matrix& feats, std::span<const int> labels,
                                 bool want_params = true, bool want_input = true);

/// d(sum of frame cross-entropies)/d(feats).
Matrix input_grad(const MlpModel& model, const Matrix& feats, std::span<const int> labels);

/// Summed frame cross-entropy.
double cross_entropy(const MlpModel& model, const Matrix& feats, std::span<const int> labels);

/// Flat binary: magic, layer shapes, float64 parameters, Adam moments and
/// hyper-parameters, seed.
void write_checkpoint(std::ostream& out, const MlpModel& model, const AdamState& adam);
void read_checkpoint(std::istream& in, MlpModel& model, AdamState& adam);

}  // namespace sfaguard
