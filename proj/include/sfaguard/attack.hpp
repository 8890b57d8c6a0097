#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sfaguard/corpus.hpp"
#include "sfaguard/hmm.hpp"
#include "sfaguard/recognizer.hpp"
#include "sfaguard/rng.hpp"

namespace sfaguard {

/// Coarser sign steps leave quantization noise in frames the target wants silent.
inline constexpr double kMaxStepSize = 0.01;

struct AttackConfig {
  double epsilon = 0.5;     // L-infinity budget in sample units
  double step_size = 0.05;  // per-iteration sign step
  int iterations = 200;
  std::uint64_t seed = 0;

  /// step_size = min(epsilon / 10, kMaxStepSize).
  static AttackConfig for_epsilon(double epsilon, int iterations = 200, std::uint64_t seed = 0);
  void validate() const;
};

struct AttackResult {
  Waveform adversarial;
  std::vector<double> delta;
  Transcript target_transcript;
  AlignmentResult aligned_states;
  Transcript achieved_transcript;
  std::vector<double> loss_trace;   // target cross-entropy at the start of each iteration, then at the end
  std::vector<double> delta_linf;   // max |delta| after each iteration
};

inline constexpr int kMaxTargetWords = 5;

/// 1 to 5 words drawn uniformly from the vocabulary; redrawn while equal to
/// the true transcript.
Transcript sample_target(Rng& rng, std::span<const Word> true_transcript);

struct WaveformGradient {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Summed frame cross-entropy of the recognizer's posteriors on x against
/// fixed frame states, and its gradient with respect to the samples
/// (MFCC front-end and MLP only).
WaveformGradient target_loss_gradient(const Recognizer& r, const Waveform& x, std::span<const int> frame_states);

/// Targeted sign-gradient PGD. The target is force-aligned once on the clean
/// signal; delta is projected after every step onto the L-infinity ball
/// intersected with the box that keeps x + delta inside [-1, 1]. The defense
/// transform is not differentiated, and the achieved transcript is decoded
/// without it.
AttackResult pgd_attack(const Recognizer& r, const Waveform& x, std::span<const Word> target, const AttackConfig& cfg);

}  // namespace sfaguard
