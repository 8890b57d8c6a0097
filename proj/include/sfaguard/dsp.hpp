#pragma once

#include <iosfwd>
#include <vector>

#include "sfaguard/corpus.hpp"

namespace sfaguard {

struct FirDesign {
  double cutoff_hz = 7000.0;
  double stopband_hz = 7500.0;
  double attenuation_db = 60.0;
  int sample_rate = kSampleRate;
  double kaiser_beta = 0.0;
};

/// Linear-phase Type-I FIR: odd length, symmetric taps.
struct FirFilter {
  std::vector<double> taps;
  int group_delay = 0;
  FirDesign design;
};

/// Kaiser-window low-pass. Length and beta start from the Kaiser closed-form
/// estimates; the length is then grown in steps of two until the response,
/// sampled every 1 Hz, keeps passband deviation within 0.1 dB and stopband
/// gain at or below -attenuation dB.
FirFilter design_lowpass(int sample_rate = kSampleRate, double cutoff_hz = 7000.0, double stopband_hz = 7500.0,
                         double min_attenuation_db = 60.0);

/// |H(f)| in dB.
double response_db(const FirFilter& filter, double freq_hz);

struct ResponseCheck {
  double max_passband_deviation_db = 0.0;
  double max_stopband_gain_db = 0.0;
};

/// Scans the response on a uniform grid of `step_hz` across [0, Nyquist].
ResponseCheck measure_response(const FirFilter& filter, double step_hz = 1.0);

/// Zero-phase filtering: output[n] = sum_k taps[k] * x[n + group_delay - k],
/// with x taken as zero outside its support. Same length and rate as x.
/// Parallel across output samples.
Waveform apply_fir(const FirFilter& filter, const Waveform& x);

namespace reference {
/// Causal full convolution followed by a group-delay shift; serial.
Waveform apply_fir_serial(const FirFilter& filter, const Waveform& x);
}  // namespace reference

/// One tap per line, full precision.
void write_taps(std::ostream& out, const FirFilter& filter);

}  // namespace sfaguard
