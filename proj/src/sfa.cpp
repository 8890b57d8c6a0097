#include "sfaguard/sfa.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sfaguard/error.hpp"

namespace sfaguard {

namespace {

constexpr double kCovarianceRidge = 1e-10;
constexpr double kRelativeRankFloor = 1e-9;

Eigen::MatrixXd covariance(const RowMatrix& centered) {
  return (centered.transpose() * centered) / static_cast<double>(centered.rows());
}

// Symmetric inverse square root restricted to a subspace; used to polish an
// almost-white basis so the unit-variance constraint holds to rounding.
Eigen::MatrixXd inverse_sqrt(const Eigen::MatrixXd& c) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
  const Eigen::VectorXd inv = es.eigenvalues().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

EmbeddedSeries time_embed(std::span<const double> x, int window, int stride) {
  if (window < 2 || stride < 1) throw InvalidArgument("time_embed: need window >= 2 and stride >= 1");
  const auto span_len = static_cast<std::size_t>((window - 1) * stride);
  if (x.size() < 1 + span_len) throw InvalidArgument("time_embed: signal shorter than embedding window");
  const std::size_t n = x.size() - span_len;
  EmbeddedSeries e;
  e.window = window;
  e.stride = stride;
  e.rows.resize(static_cast<Eigen::Index>(n), window);
  for (std::size_t t = 0; t < n; ++t) {
    for (int k = 0; k < window; ++k) {
      e.rows(static_cast<Eigen::Index>(t), k) = x[t + static_cast<std::size_t>(k * stride)];
    }
  }
  return e;
}

ExpandedSeries quadratic_expand(const EmbeddedSeries& e) {
  if (e.rows.cols() != 2) throw InvalidArgument("quadratic_expand: expected embedding width 2");
  ExpandedSeries s;
  s.rows.resize(e.rows.rows(), 5);
  for (Eigen::Index t = 0; t < e.rows.rows(); ++t) {
    const double x0 = e.rows(t, 0);
    const double x1 = e.rows(t, 1);
    s.rows(t, 0) = x0;
    s.rows(t, 1) = x1;
    s.rows(t, 2) = x0 * x0;
    s.rows(t, 3) = x0 * x1;
    s.rows(t, 4) = x1 * x1;
  }
  return s;
}

WhiteningResult fit_whitening(const RowMatrix& series) {
  const Eigen::Index n = series.rows();
  const Eigen::Index dim = series.cols();
  if (n < dim + 1) throw InvalidArgument("fit_whitening: need more rows than dimensions");
  bool any_varying = false;
  for (Eigen::Index j = 0; j < dim && !any_varying; ++j) {
    any_varying = series.col(j).maxCoeff() > series.col(j).minCoeff();
  }
  if (!any_varying) throw DegenerateInput("fit_whitening: all input dimensions are constant");

  WhiteningResult r;
  r.mean = series.colwise().mean().transpose();
  const RowMatrix centered = series.rowwise() - r.mean.transpose();
  Eigen::MatrixXd cov = covariance(centered);
  cov.diagonal().array() += kCovarianceRidge;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const Eigen::VectorXd variances = (es.eigenvalues().array() - kCovarianceRidge).matrix();
  const double largest = variances.maxCoeff();
  if (!(largest > 0.0)) throw DegenerateInput("fit_whitening: zero covariance");

  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = dim - 1; i >= 0; --i) {
    if (variances(i) >= kRelativeRankFloor * largest) keep.push_back(i);
  }
  r.retained_rank = static_cast<int>(keep.size());
  Eigen::MatrixXd map(dim, r.retained_rank);
  for (int c = 0; c < r.retained_rank; ++c) {
    map.col(c) = es.eigenvectors().col(keep[static_cast<std::size_t>(c)]) / std::sqrt(variances(keep[static_cast<std::size_t>(c)]));
  }
  // One refinement pass in the retained subspace.
  const RowMatrix first = centered * map;
  map = map * inverse_sqrt(covariance(first));
  r.map = map;
  r.whitened = centered * map;
  return r;
}

SlowProjection slowest_projection(const RowMatrix& whitened) {
  if (whitened.rows() < 3) throw InvalidArgument("slowest_projection: need at least 3 rows");
  const Eigen::Index n = whitened.rows() - 1;
  const RowMatrix diff = whitened.bottomRows(n) - whitened.topRows(n);
  const Eigen::MatrixXd cov = (diff.transpose() * diff) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  SlowProjection p;
  p.eigenvalues.assign(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
  p.projection = es.eigenvectors().col(0).normalized();
  for (Eigen::Index i = 0; i < p.projection.size(); ++i) {
    if (std::abs(p.projection(i)) > 1e-12) {
      if (p.projection(i) < 0) p.projection = -p.projection;
      break;
    }
  }
  return p;
}

double slowness(std::span<const double> y) {
  if (y.size() < 2) return 0.0;
  double acc = 0.0;
  for (std::size_t t = 1; t < y.size(); ++t) {
    const double d = y[t] - y[t - 1];
    acc += d * d;
  }
  return acc / static_cast<double>(y.size() - 1);
}

SfaTransform fit_sfa(const Waveform& x) {
  if (x.size() < kSfaMinSamples) throw InvalidArgument("sfa: need at least 32 samples");
  const auto expanded = quadratic_expand(time_embed(x.samples, kSfaEmbedWindow, kSfaEmbedStride));
  const auto white = fit_whitening(expanded.rows);
  const auto slow = slowest_projection(white.whitened);
  SfaTransform t;
  t.mean = white.mean;
  t.whitening_map = white.map;
  t.retained_rank = white.retained_rank;
  t.slowness_eigenvalues = slow.eigenvalues;
  t.projection = slow.projection;
  return t;
}

std::vector<double> apply_sfa(const SfaTransform& transform, std::span<const double> x) {
  if (x.size() < 2) throw InvalidArgument("apply_sfa: need at least 2 samples");
  // Fold the whitening map and projection into one 5-vector.
  const Eigen::VectorXd w = transform.whitening_map * transform.projection;
  const double offset = w.dot(transform.mean);
  std::vector<double> y(x.size() - 1);
  for (std::size_t t = 0; t + 1 < x.size(); ++t) {
    const double x0 = x[t];
    const double x1 = x[t + 1];
    y[t] = w(0) * x0 + w(1) * x1 + w(2) * x0 * x0 + w(3) * x0 * x1 + w(4) * x1 * x1 - offset;
  }
  return y;
}

Waveform sfa_transform(const Waveform& x) {
  if (x.size() < kSfaMinSamples) throw InvalidArgument("sfa: need at least 32 samples");
  const auto expanded = quadratic_expand(time_embed(x.samples, kSfaEmbedWindow, kSfaEmbedStride));
  const auto white = fit_whitening(expanded.rows);
  const auto slow = slowest_projection(white.whitened);
  const Eigen::VectorXd y = white.whitened * slow.projection;
  return Waveform{std::vector<double>(y.data(), y.data() + y.size()), x.sample_rate};
}

std::string serialize(const SfaTransform& t) {
  std::ostringstream out;
  out.precision(17);
  out << "rank " << t.retained_rank << '\n' << "mean";
  for (Eigen::Index i = 0; i < t.mean.size(); ++i) out << ' ' << t.mean(i);
  out << '\n' << "map " << t.whitening_map.rows() << ' ' << t.whitening_map.cols();
  for (Eigen::Index i = 0; i < t.whitening_map.rows(); ++i) {
    for (Eigen::Index j = 0; j < t.whitening_map.cols(); ++j) out << ' ' << t.whitening_map(i, j);
  }
  out << '\n' << "eigenvalues";
  for (double v : t.slowness_eigenvalues) out << ' ' << v;
  out << '\n' << "projection";
  for (Eigen::Index i = 0; i < t.projection.size(); ++i) out << ' ' << t.projection(i);
  out << '\n';
  return out.str();
}

SfaTransform parse_sfa_transform(const std::string& text) {
  std::istringstream in(text);
  std::string key;
  SfaTransform t;
  auto expect = [&](const char* name) {
    if (!(in >> key) || key != name) throw FormatError(std::string("sfa record: expected ") + name);
  };
  expect("rank");
  in >> t.retained_rank;
  const int r = t.retained_rank;
  if (!in || r < 1 || r > 5) throw FormatError("sfa record: bad rank");
  expect("mean");
  t.mean.resize(5);
  for (int i = 0; i < 5; ++i) in >> t.mean(i);
  expect("map");
  int rows = 0, cols = 0;
  in >> rows >> cols;
  if (rows != 5 || cols != r) throw FormatError("sfa record: bad map shape");
  t.whitening_map.resize(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) in >> t.whitening_map(i, j);
  }
  expect("eigenvalues");
  t.slowness_eigenvalues.resize(static_cast<std::size_t>(r));
  for (auto& v : t.slowness_eigenvalues) in >> v;
  expect("projection");
  t.projection.resize(r);
  for (int i = 0; i < r; ++i) in >> t.projection(i);
  if (!in) throw FormatError("sfa record: truncated");
  return t;
}

}  // namespace sfaguard
