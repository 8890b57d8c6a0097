#include <catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "sfaguard/corpus.hpp"
#include "sfaguard/error.hpp"
#include "sfaguard/rng.hpp"
#include "sfaguard/sfa.hpp"

using namespace sfaguard;

namespace {

double mean_of(std::span<const double> y) { return std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size()); }

double variance_of(std::span<const double> y) {
  const double m = mean_of(y);
  double v = 0.0;
  for (double s : y) v += (s - m) * (s - m);
  return v / static_cast<double>(y.size());
}

double correlation(std::span<const double> a, std::span<const double> b) {
  const double ma = mean_of(a), mb = mean_of(b);
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += (a[i] - ma) * (b[i] - mb);
    aa += (a[i] - ma) * (a[i] - ma);
    bb += (b[i] - mb) * (b[i] - mb);
  }
  return ab / std::sqrt(aa * bb);
}

Waveform noise(std::uint64_t seed, std::size_t n, double scale = 0.3) {
  Rng rng(seed);
  Waveform w;
  for (std::size_t i = 0; i < n; ++i) w.samples.push_back(scale * rng.normal());
  return w;
}

}  // namespace

TEST_CASE("time_embed examples", "[sfa]") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const EmbeddedSeries e = time_embed(x, 2, 1);
  REQUIRE(e.rows.rows() == 4);
  REQUIRE(e.rows.cols() == 2);
  for (Eigen::Index t = 0; t < 4; ++t) {
    REQUIRE(e.rows(t, 0) == x[static_cast<std::size_t>(t)]);
    REQUIRE(e.rows(t, 1) == x[static_cast<std::size_t>(t) + 1]);
  }
  const EmbeddedSeries wide = time_embed(x, 3, 2);
  REQUIRE(wide.rows.rows() == 1);
  REQUIRE(wide.rows(0, 0) == 1);
  REQUIRE(wide.rows(0, 1) == 3);
  REQUIRE(wide.rows(0, 2) == 5);

  REQUIRE_THROWS_AS(time_embed(x, 1, 1), InvalidArgument);
  REQUIRE_THROWS_AS(time_embed(x, 2, 0), InvalidArgument);
  REQUIRE_THROWS_AS(time_embed(std::vector<double>{1.0}, 2, 1), InvalidArgument);
}

TEST_CASE("time_embed rows reconstruct the signal", "[sfa][property]") {
  const Waveform w = noise(1, 777);
  const EmbeddedSeries e = time_embed(w.samples, 2, 1);
  std::vector<double> back;
  for (Eigen::Index t = 0; t < e.rows.rows(); ++t) back.push_back(e.rows(t, 0));
  back.push_back(e.rows(e.rows.rows() - 1, 1));
  REQUIRE(back == w.samples);
}

TEST_CASE("quadratic_expand monomials", "[sfa]") {
  EmbeddedSeries e;
  e.rows.resize(3, 2);
  e.rows << 1, 2, 0, 0, -1, 1;
  const ExpandedSeries s = quadratic_expand(e);
  REQUIRE(s.rows.cols() == 5);
  const double want[3][5] = {{1, 2, 1, 2, 4}, {0, 0, 0, 0, 0}, {-1, 1, 1, -1, 1}};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 5; ++c) REQUIRE(s.rows(r, c) == want[r][c]);
  }
  EmbeddedSeries bad;
  bad.rows.resize(2, 3);
  bad.rows.setZero();
  REQUIRE_THROWS_AS(quadratic_expand(bad), InvalidArgument);
}

TEST_CASE("whitening a correlated Gaussian gives identity covariance", "[sfa]") {
  Rng rng(17);
  RowMatrix s(10000, 2);
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double a = rng.normal(), b = rng.normal();
    s(i, 0) = 3.0 + 2.0 * a;
    s(i, 1) = -1.0 + 1.5 * a + 0.5 * b;
  }
  const WhiteningResult w = fit_whitening(s);
  REQUIRE(w.retained_rank == 2);
  const Eigen::VectorXd mean = w.whitened.colwise().mean().transpose();
  REQUIRE(mean.norm() <= 1e-8);
  const Eigen::MatrixXd cov = (w.whitened.transpose() * w.whitened) / static_cast<double>(s.rows());
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) REQUIRE(std::abs(cov(i, j) - (i == j ? 1.0 : 0.0)) <= 1e-2);
  }
  // Tighter than the example: variance within 1e-6, cross-correlation within 1e-6.
  REQUIRE(std::abs(cov(0, 0) - 1.0) <= 1e-6);
  REQUIRE(std::abs(cov(1, 1) - 1.0) <= 1e-6);
  REQUIRE(std::abs(cov(0, 1)) <= 1e-6);
}

TEST_CASE("whitening drops rank-deficient directions", "[sfa]") {
  Rng rng(18);
  RowMatrix s(500, 3);
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double a = rng.normal(), b = rng.normal();
    s(i, 0) = a;
    s(i, 1) = b;
    s(i, 2) = a - 2.0 * b;
  }
  const WhiteningResult w = fit_whitening(s);
  REQUIRE(w.retained_rank == 2);
  REQUIRE(w.whitened.cols() == 2);
}

TEST_CASE("whitening of constant input is degenerate", "[sfa]") {
  RowMatrix s(50, 5);
  s.setConstant(0.25);
  REQUIRE_THROWS_AS(fit_whitening(s), DegenerateInput);
  REQUIRE_THROWS_AS(fit_whitening(RowMatrix::Random(5, 5)), InvalidArgument);
  const Waveform flat{std::vector<double>(1000, 0.1), 16000};
  REQUIRE_THROWS_AS(sfa_transform(flat), DegenerateInput);
}

TEST_CASE("slowest projection picks the slow axis of a whitened pair", "[sfa]") {
  Rng rng(19);
  const Eigen::Index n = 8000;
  RowMatrix z(n, 2);
  for (Eigen::Index t = 0; t < n; ++t) {
    z(t, 0) = std::sqrt(2.0) * std::sin(2.0 * M_PI * 3.0 * static_cast<double>(t) / static_cast<double>(n));
    z(t, 1) = rng.normal();
  }
  // Decorrelate exactly so the input is white.
  const WhiteningResult w = fit_whitening(z);
  const SlowProjection p = slowest_projection(w.whitened);
  // Map the projection back to the source axes via the whitening map.
  const Eigen::VectorXd dir = (w.map * p.projection).normalized();
  const double angle = std::acos(std::min(1.0, std::abs(dir(0)))) * 180.0 / M_PI;
  REQUIRE(angle <= 5.0);
}

TEST_CASE("hand-built diagonal derivative covariance", "[sfa]") {
  // Derivatives alternate patterns ++-- and +-+- so their cross term vanishes.
  const int n = 4 * 250;
  RowMatrix z(n + 1, 2);
  z.row(0).setZero();
  const double a[4] = {1, 1, -1, -1};
  const double b[4] = {1, -1, 1, -1};
  for (int t = 0; t < n; ++t) {
    z(t + 1, 0) = z(t, 0) + std::sqrt(0.1) * a[t % 4];
    z(t + 1, 1) = z(t, 1) + b[t % 4];
  }
  const SlowProjection p = slowest_projection(z);
  REQUIRE(p.eigenvalues.size() == 2);
  REQUIRE(std::abs(p.eigenvalues[0] - 0.1) <= 1e-6);
  REQUIRE(std::abs(p.eigenvalues[1] - 1.0) <= 1e-6);
  REQUIRE(std::abs(p.projection(0) - 1.0) <= 1e-9);
  REQUIRE(std::abs(p.projection(1)) <= 1e-9);
}

TEST_CASE("eigenvalues ascend and projection sign is fixed", "[sfa][property]") {
  Rng rng(20);
  for (int trial = 0; trial < 20; ++trial) {
    RowMatrix z(200, 5);
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      for (int j = 0; j < 5; ++j) z(i, j) = rng.normal();
    }
    const SlowProjection p = slowest_projection(z);
    REQUIRE(p.eigenvalues.size() == 5);
    for (std::size_t i = 1; i < p.eigenvalues.size(); ++i) REQUIRE(p.eigenvalues[i - 1] <= p.eigenvalues[i]);
    REQUIRE(std::abs(p.projection.norm() - 1.0) <= 1e-12);
    Eigen::Index first = 0;
    while (std::abs(p.projection(first)) <= 1e-12) ++first;
    REQUIRE(p.projection(first) > 0.0);
  }
  REQUIRE_THROWS_AS(slowest_projection(RowMatrix::Random(2, 3)), InvalidArgument);
}

TEST_CASE("sfa output satisfies the zero-mean unit-variance constraints", "[sfa][property]") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const Waveform x = synth_digit_utterance(Transcript{static_cast<Word>(rng.below(kVocabularySize))}, rng.next());
    const Waveform y = sfa_transform(x);
    REQUIRE(y.size() == x.size() - 1);
    REQUIRE(y.sample_rate == x.sample_rate);
    REQUIRE(std::abs(mean_of(y.samples)) <= 1e-8);
    REQUIRE(std::abs(variance_of(y.samples) - 1.0) <= 1e-6);
  }
}

TEST_CASE("sfa output attains the smallest slowness eigenvalue", "[sfa]") {
  const Waveform x = synth_digit_utterance(Transcript{Word::three}, 9);
  const SfaTransform t = fit_sfa(x);
  const Waveform y = sfa_transform(x);
  REQUIRE(slowness(y.samples) == Catch::Approx(t.slowness_eigenvalues.front()).epsilon(1e-9));
  const std::vector<double> applied = apply_sfa(t, x.samples);
  REQUIRE(applied.size() == y.size());
  for (std::size_t i = 0; i < applied.size(); ++i) REQUIRE(std::abs(applied[i] - y.samples[i]) <= 1e-8);
}

TEST_CASE("no random projection of the whitened expansion is slower", "[sfa][property]") {
  const Waveform x = synth_digit_utterance(Transcript{Word::seven, Word::two}, 10);
  const auto white = fit_whitening(quadratic_expand(time_embed(x.samples, 2, 1)).rows);
  const SlowProjection p = slowest_projection(white.whitened);
  const Eigen::VectorXd y1 = white.whitened * p.projection;
  const double best = slowness(std::span<const double>(y1.data(), static_cast<std::size_t>(y1.size())));
  Rng rng(22);
  int violations = 0;
  for (int k = 0; k < 1000; ++k) {
    Eigen::VectorXd d(white.retained_rank);
    for (int i = 0; i < d.size(); ++i) d(i) = rng.normal();
    d.normalize();
    const Eigen::VectorXd y = white.whitened * d;
    if (slowness(std::span<const double>(y.data(), static_cast<std::size_t>(y.size()))) < best - 1e-9) ++violations;
  }
  REQUIRE(violations == 0);
}

TEST_CASE("slow sine passes through SFA", "[sfa]") {
  const std::size_t n = 16000;
  Waveform x;
  std::vector<double> ref;
  for (std::size_t i = 0; i < n; ++i) {
    x.samples.push_back(std::sin(2.0 * M_PI * 2.0 * static_cast<double>(i) / static_cast<double>(n)));
  }
  const Waveform y = sfa_transform(x);
  // Compare against the sinusoid at either alignment of the length-(n-1) output.
  double best = 0.0;
  for (int shift = 0; shift <= 1; ++shift) {
    std::vector<double> s(y.size());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = x.samples[i + static_cast<std::size_t>(shift)];
    best = std::max(best, std::abs(correlation(y.samples, s)));
  }
  REQUIRE(best >= 0.99);
}

TEST_CASE("50 Hz plus 6 kHz: output is slower than the normalized input", "[sfa]") {
  Waveform x;
  for (int i = 0; i < 16000; ++i) {
    const double t = i / 16000.0;
    x.samples.push_back(0.4 * std::sin(2.0 * M_PI * 50.0 * t) + 0.4 * std::sin(2.0 * M_PI * 6000.0 * t));
  }
  std::vector<double> normalized = x.samples;
  const double m = mean_of(normalized), sd = std::sqrt(variance_of(normalized));
  for (double& v : normalized) v = (v - m) / sd;
  const Waveform y = sfa_transform(x);
  REQUIRE(slowness(y.samples) <= slowness(normalized));
}

TEST_CASE("transform record round trip", "[sfa]") {
  const Waveform x = noise(23, 500);
  const SfaTransform t = fit_sfa(x);
  const SfaTransform r = parse_sfa_transform(serialize(t));
  REQUIRE(r.retained_rank == t.retained_rank);
  REQUIRE(r.mean == t.mean);
  REQUIRE(r.whitening_map == t.whitening_map);
  REQUIRE(r.slowness_eigenvalues == t.slowness_eigenvalues);
  REQUIRE(r.projection == t.projection);
  REQUIRE(apply_sfa(r, x.samples) == apply_sfa(t, x.samples));
  REQUIRE_THROWS_AS(parse_sfa_transform("rank 9\n"), FormatError);
  REQUIRE_THROWS_AS(parse_sfa_transform("garbage"), FormatError);
  REQUIRE_THROWS_AS(parse_sfa_transform(serialize(t).substr(0, 40)), FormatError);
}

TEST_CASE("short input is rejected", "[sfa]") {
  REQUIRE_THROWS_AS(sfa_transform(noise(24, 31)), InvalidArgument);
  REQUIRE_NOTHROW(sfa_transform(noise(24, 32)));
  REQUIRE_THROWS_AS(apply_sfa(fit_sfa(noise(25, 100)), std::vector<double>{0.1}), InvalidArgument);
}
