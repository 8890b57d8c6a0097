#include "sfaguard/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include "sfaguard/error.hpp"

namespace sfaguard {

namespace {

constexpr double kPassbandToleranceDb = 0.1;

double kaiser_beta(double attenuation_db) {
  if (attenuation_db > 50.0) return 0.1102 * (attenuation_db - 8.7);
  if (attenuation_db >= 21.0) return 0.5842 * std::pow(attenuation_db - 21.0, 0.4) + 0.07886 * (attenuation_db - 21.0);
  return 0.0;
}

std::vector<double> kaiser_sinc(int length, double cutoff_norm, double beta) {
  // cutoff_norm in cycles/sample.
  std::vector<double> h(static_cast<std::size_t>(length));
  const int center = (length - 1) / 2;
  const double denom = std::cyl_bessel_i(0.0, beta);
  for (int n = 0; n < length; ++n) {
    const int m = n - center;
    const double ideal = m == 0 ? 2.0 * cutoff_norm
                                : std::sin(2.0 * std::numbers::pi * cutoff_norm * m) / (std::numbers::pi * m);
    const double r = static_cast<double>(m) / center;
    const double w = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / denom;
    h[static_cast<std::size_t>(n)] = ideal * w;
  }
  // Exact symmetry regardless of rounding in sin().
  for (int n = 0; n < center; ++n) {
    const double avg = 0.5 * (h[static_cast<std::size_t>(n)] + h[static_cast<std::size_t>(length - 1 - n)]);
    h[static_cast<std::size_t>(n)] = avg;
    h[static_cast<std::size_t>(length - 1 - n)] = avg;
  }
  return h;
}

}  // namespace

double response_db(const FirFilter& filter, double freq_hz) {
  // Zero-phase amplitude of a symmetric filter.
  const double omega = 2.0 * std::numbers::pi * freq_hz / filter.design.sample_rate;
  const auto c = static_cast<std::size_t>(filter.group_delay);
  double amp = filter.taps[c];
  for (std::size_t k = 1; k <= c; ++k) amp += 2.0 * filter.taps[c + k] * std::cos(omega * static_cast<double>(k));
  return 20.0 * std::log10(std::max(std::abs(amp), 1e-300));
}

ResponseCheck measure_response(const FirFilter& filter, double step_hz) {
  ResponseCheck check;
  check.max_stopband_gain_db = -std::numeric_limits<double>::infinity();
  const double nyquist = filter.design.sample_rate / 2.0;
  const auto steps = static_cast<long>(std::floor(nyquist / step_hz));
  for (long i = 0; i <= steps; ++i) {
    const double f = static_cast<double>(i) * step_hz;
    if (f <= filter.design.cutoff_hz) {
      check.max_passband_deviation_db = std::max(check.max_passband_deviation_db, std::abs(response_db(filter, f)));
    } else if (f >= filter.design.stopband_hz) {
      check.max_stopband_gain_db = std::max(check.max_stopband_gain_db, response_db(filter, f));
    }
  }
  return check;
}

FirFilter design_lowpass(int sample_rate, double cutoff_hz, double stopband_hz, double min_attenuation_db) {
  if (sample_rate <= 0) throw InvalidArgument("sample rate must be positive");
  if (!(cutoff_hz > 0.0 && cutoff_hz < stopband_hz && stopband_hz < sample_rate / 2.0)) {
    throw InvalidArgument("low-pass design requires 0 < cutoff < stopband < Nyquist");
  }
  if (min_attenuation_db <= 0.0) throw InvalidArgument("attenuation must be positive");

  const double transition = 2.0 * std::numbers::pi * (stopband_hz - cutoff_hz) / sample_rate;
  const double beta = kaiser_beta(min_attenuation_db);
  int order = static_cast<int>(std::ceil((min_attenuation_db - 7.95) / (2.285 * transition)));
  int length = order + 1;
  if (length % 2 == 0) ++length;
  const double cutoff_norm = 0.5 * (cutoff_hz + stopband_hz) / sample_rate;

  FirFilter filter;
  filter.design = FirDesign{cutoff_hz, stopband_hz, min_attenuation_db, sample_rate, beta};
  for (;; length += 2) {
    filter.taps = kaiser_sinc(length, cutoff_norm, beta);
    filter.group_delay = (length - 1) / 2;
    const auto check = measure_response(filter, 1.0);
    if (check.max_passband_deviation_db <= kPassbandToleranceDb && check.max_stopband_gain_db <= -min_attenuation_db) {
      return filter;
    }
    if (length > 16 * (order + 1)) throw InvalidArgument("low-pass design did not converge");
  }
}

Waveform apply_fir(const FirFilter& filter, const Waveform& x) {
  if (x.empty()) throw InvalidArgument("apply_fir: empty input");
  const auto n = static_cast<long long>(x.size());
  const auto taps = static_cast<long long>(filter.taps.size());
  const long long gd = filter.group_delay;
  Waveform y{std::vector<double>(x.size(), 0.0), x.sample_rate};
  const double* in = x.samples.data();
  const double* h = filter.taps.data();
  double* out = y.samples.data();
  constexpr long long kBlock = 4096;
  const long long blocks = (n + kBlock - 1) / kBlock;
#pragma omp parallel for schedule(static)
  for (long long b = 0; b < blocks; ++b) {
    const long long lo = b * kBlock;
    const long long hi = std::min(n, lo + kBlock);
    for (long long k = 0; k < taps; ++k) {
      // x index i + gd - k must lie in [0, n).
      const long long i_lo = std::max(lo, k - gd);
      const long long i_hi = std::min(hi, n + k - gd);
      const double hk = h[k];
      const double* src = in + gd - k;
      for (long long i = i_lo; i < i_hi; ++i) out[i] += hk * src[i];
    }
  }
  return y;
}

namespace reference {

Waveform apply_fir_serial(const FirFilter& filter, const Waveform& x) {
  if (x.empty()) throw InvalidArgument("apply_fir: empty input");
  const std::size_t n = x.size();
  const std::size_t taps = filter.taps.size();
  std::vector<double> full(n + taps - 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < taps; ++k) full[i + k] += filter.taps[k] * x.samples[i];
  }
  Waveform y{std::vector<double>(n), x.sample_rate};
  for (std::size_t i = 0; i < n; ++i) y.samples[i] = full[i + static_cast<std::size_t>(filter.group_delay)];
  return y;
}

}  // namespace reference

void write_taps(std::ostream& out, const FirFilter& filter) {
  const auto precision = out.precision(17);
  for (double t : filter.taps) out << t << '\n';
  out.precision(precision);
}

}  // namespace sfaguard
