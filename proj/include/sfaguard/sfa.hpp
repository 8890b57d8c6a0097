#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sfaguard/corpus.hpp"

namespace sfaguard {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Delay embedding: row t = (x[t*R], x[t*R + R], ..., x[t*R + (L-1)*R]).
struct EmbeddedSeries {
  RowMatrix rows;
  int window = 2;
  int stride = 1;
};

/// Rows [x0, x1, x0^2, x0*x1, x1^2].
struct ExpandedSeries {
  RowMatrix rows;
};

struct WhiteningResult {
  RowMatrix whitened;  // n x rank
  Eigen::VectorXd mean;
  Eigen::MatrixXd map;  // dim x rank; z = (h - mean)^T * map
  int retained_rank = 0;
};

struct SlowProjection {
  std::vector<double> eigenvalues;  // ascending
  Eigen::VectorXd projection;       // unit eigenvector of eigenvalues[0]
};

/// Fitted single-component quadratic SFA:
/// y(t) = projection . (whitening_map^T (h(x(t)) - mean)).
struct SfaTransform {
  Eigen::VectorXd mean;
  Eigen::MatrixXd whitening_map;
  std::vector<double> slowness_eigenvalues;
  Eigen::VectorXd projection;
  int retained_rank = 0;
};

inline constexpr int kSfaEmbedWindow = 2;
inline constexpr int kSfaEmbedStride = 1;
inline constexpr std::size_t kSfaMinSamples = 32;

EmbeddedSeries time_embed(std::span<const double> x, int window, int stride);
ExpandedSeries quadratic_expand(const EmbeddedSeries& e);

/// PCA sphering. Directions whose variance is below 1e-9 of the largest are
/// dropped. Throws DegenerateInput when every column is constant.
WhiteningResult fit_whitening(const RowMatrix& series);

/// Eigen-decomposition of the covariance of first differences. Sign is fixed
/// so the first nonzero component of the projection is positive.
SlowProjection slowest_projection(const RowMatrix& whitened);

/// Mean squared first difference of a sequence.
double slowness(std::span<const double> y);

SfaTransform fit_sfa(const Waveform& x);
/// Evaluates a fitted transform on any signal of at least two samples.
std::vector<double> apply_sfa(const SfaTransform& transform, std::span<const double> x);

/// Fits on x and returns its slowest component (length len(x) - 1, zero mean,
/// unit variance, nominal sample rate of x).
Waveform sfa_transform(const Waveform& x);

/// Flat text record: rank, mean, map (row-major), eigenvalues, projection.
std::string serialize(const SfaTransform& t);
SfaTransform parse_sfa_transform(const std::string& text);

}  // namespace sfaguard
