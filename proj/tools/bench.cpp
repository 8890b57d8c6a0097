// Times the OpenMP kernels against their serial references.
#include <chrono>
#include <cstdio>
#include <vector>

#include "sfaguard/corpus.hpp"
#include "sfaguard/dsp.hpp"
#include "sfaguard/frontend.hpp"
#include "sfaguard/parallel.hpp"
#include "sfaguard/preprocess.hpp"
#include "sfaguard/sfa.hpp"

using namespace sfaguard;

namespace {

template <class F>
double best_ms(int reps, F&& f) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

double checksum(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

void report(const char* name, double par, double ser) {
  std::printf("%-28s parallel %9.3f ms   serial %9.3f ms   speedup %5.2fx\n", name, par, ser, ser / par);
}

}  // namespace

int main() {
  std::printf("threads: %d\n", max_threads());
  const Corpus corpus = build_corpus(1, 64, 99);
  const Waveform& x = corpus.test.front().audio;
  Waveform longer;
  for (const auto& u : corpus.test) longer.samples.insert(longer.samples.end(), u.audio.samples.begin(), u.audio.samples.end());

  const FirFilter& lp = defense_lowpass();
  double sink = 0.0;
  report("fir (64 utterances joined)",
         best_ms(5, [&] { sink += checksum(apply_fir(lp, longer).samples); }),
         best_ms(5, [&] { sink += checksum(reference::apply_fir_serial(lp, longer).samples); }));

  report("mfcc fft vs direct dft",
         best_ms(5, [&] { sink += mfcc(x)(0, 0); }),
         best_ms(2, [&] { sink += reference::mfcc_serial(x)(0, 0); }));

  std::vector<double> out(corpus.test.size());
  report("features (64 utterances)",
         best_ms(3, [&] { parallel_for(out.size(), [&](std::size_t i) { out[i] = compute_features(corpus.test[i].audio).frames(0, 0); }); }),
         best_ms(3, [&] { serial_for(out.size(), [&](std::size_t i) { out[i] = compute_features(corpus.test[i].audio).frames(0, 0); }); }));

  report("sfa (64 utterances)",
         best_ms(2, [&] { parallel_for(out.size(), [&](std::size_t i) { out[i] = sfa_transform(corpus.test[i].audio).samples[0]; }); }),
         best_ms(2, [&] { serial_for(out.size(), [&](std::size_t i) { out[i] = sfa_transform(corpus.test[i].audio).samples[0]; }); }));
  std::printf("(checksum %g)\n", sink + checksum(out));
  return 0;
}
