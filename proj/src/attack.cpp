#include "sfaguard/attack.hpp"

#include <algorithm>
#include <cmath>

#include "sfaguard/error.hpp"

namespace sfaguard {

AttackConfig AttackConfig::for_epsilon(double epsilon, int iterations, std::uint64_t seed) {
  return AttackConfig{epsilon, std::min(epsilon / 10.0, kMaxStepSize), iterations, seed};
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0)) throw InvalidArgument("attack: epsilon must be non-negative");
  if (epsilon > 0.0 && !(step_size > 0.0)) throw InvalidArgument("attack: step size must be positive");
  if (iterations < 1) throw InvalidArgument("attack: need at least one iteration");
}

Transcript sample_target(Rng& rng, std::span<const Word> true_transcript) {
  for (;;) {
    const int length = rng.between(1, kMaxTargetWords);
    Transcript t;
    for (int i = 0; i < length; ++i) t.push_back(static_cast<Word>(rng.below(kVocabularySize)));
    if (!std::equal(t.begin(), t.end(), true_transcript.begin(), true_transcript.end())) return t;
  }
}

WaveformGradient target_loss_gradient(const Recognizer& r, const Waveform& x, std::span<const int> frame_states) {
  const Frontend& fe = default_frontend();
  FrontendTrace trace;
  const FeatureSequence feats = fe.features(x, &trace);
  const LossGradients g = loss_and_gradients(r.model, feats.frames, frame_states, false, true);
  return {g.loss, fe.backward(trace, g.input)};
}

AttackResult pgd_attack(const Recognizer& r, const Waveform& x, std::span<const Word> target, const AttackConfig& cfg) {
  cfg.validate();
  if (x.empty()) throw InvalidArgument("attack: empty waveform");
  AttackResult res;
  res.target_transcript.assign(target.begin(), target.end());
  res.aligned_states = forced_align(r.graph, r.log_probs(x), target);

  const std::size_t n = x.size();
  std::vector<double> lo(n), hi(n);
  for (std::size_t i = 0; i < n; ++i) {
    lo[i] = std::max(-cfg.epsilon, std::min(0.0, -1.0 - x.samples[i]));
    hi[i] = std::min(cfg.epsilon, std::max(0.0, 1.0 - x.samples[i]));
  }
  res.delta.assign(n, 0.0);
  Waveform current = x;
  for (int k = 0; k < cfg.iterations; ++k) {
    const WaveformGradient g = target_loss_gradient(r, current, res.aligned_states.frame_states);
    res.loss_trace.push_back(g.loss);
    double linf = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double sign = g.grad[i] > 0.0 ? 1.0 : (g.grad[i] < 0.0 ? -1.0 : 0.0);
      double d = std::clamp(res.delta[i] - cfg.step_size * sign, lo[i], hi[i]);
      if (d == 0.0) d = 0.0;  // no negative zeros
      res.delta[i] = d;
      current.samples[i] = d == 0.0 ? x.samples[i] : x.samples[i] + d;
      linf = std::max(linf, std::abs(d));
    }
    res.delta_linf.push_back(linf);
  }
  res.loss_trace.push_back(cross_entropy(r.model, compute_features(current).frames, res.aligned_states.frame_states));

  res.adversarial = x;
  for (std::size_t i = 0; i < n; ++i) {
    if (res.delta[i] != 0.0) res.adversarial.samples[i] = std::clamp(x.samples[i] + res.delta[i], -1.0, 1.0);
  }
  res.achieved_transcript = viterbi_decode(r.graph, r.log_probs(res.adversarial));
  return res;
}

}  // namespace sfaguard
