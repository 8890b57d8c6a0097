#include <catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "sfaguard/attack.hpp"
#include "sfaguard/error.hpp"
#include "sfaguard/metrics.hpp"
#include "sfaguard/parallel.hpp"

using namespace sfaguard;

namespace {

struct Fixture {
  Corpus corpus;
  Recognizer recognizer;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture x;
    x.corpus = build_corpus(300, 60, 21);
    x.recognizer = train_recognizer(x.corpus.train, Pipeline::baseline, 4);
    return x;
  }();
  return f;
}

}  // namespace

TEST_CASE("target lengths and words are uniform", "[attack]") {
  Rng rng(1);
  const Transcript truth{Word::five};
  std::map<std::size_t, int> lengths;
  std::map<Word, int> words;
  int total_words = 0;
  for (int i = 0; i < 10000; ++i) {
    const Transcript t = sample_target(rng, truth);
    REQUIRE(t != truth);
    ++lengths[t.size()];
    for (Word w : t) {
      ++words[w];
      ++total_words;
    }
  }
  REQUIRE(lengths.size() == 5);
  // Rejecting the single word "five" removes 1/11 of the length-1 draws.
  const double p1 = 0.2 * (10.0 / 11.0) / (1.0 - 0.2 / 11.0);
  const double p_other = 0.2 / (1.0 - 0.2 / 11.0);
  for (const auto& [len, count] : lengths) {
    const double p = len == 1 ? p1 : p_other;
    const double sigma = std::sqrt(10000.0 * p * (1.0 - p));
    INFO("length " << len << " count " << count);
    REQUIRE(std::abs(count - 10000.0 * p) <= 3.0 * sigma);
  }
  REQUIRE(words.size() == 11);
  for (const auto& [w, count] : words) {
    const double p = 1.0 / 11.0;
    REQUIRE(std::abs(count - total_words * p) <= 4.0 * std::sqrt(total_words * p * (1.0 - p)));
  }
}

TEST_CASE("target sampling is deterministic in the seed", "[attack]") {
  Rng a(99), b(99);
  const Transcript truth{Word::one, Word::two};
  for (int i = 0; i < 100; ++i) REQUIRE(sample_target(a, truth) == sample_target(b, truth));
}

TEST_CASE("attack configuration", "[attack]") {
  const AttackConfig small = AttackConfig::for_epsilon(0.05);
  REQUIRE(small.step_size == Catch::Approx(0.005).epsilon(1e-15));
  REQUIRE(small.iterations == 200);
  REQUIRE(AttackConfig::for_epsilon(0.5).step_size == kMaxStepSize);
  REQUIRE_THROWS_AS((AttackConfig{-0.1, 0.01, 10, 0}.validate()), InvalidArgument);
  REQUIRE_THROWS_AS((AttackConfig{0.1, 0.0, 10, 0}.validate()), InvalidArgument);
  REQUIRE_THROWS_AS((AttackConfig{0.1, 0.01, 0, 0}.validate()), InvalidArgument);
  REQUIRE_NOTHROW(AttackConfig{0.0, 0.0, 1, 0}.validate());
}

TEST_CASE("zero budget returns the input bit-exactly", "[attack]") {
  const Fixture& f = fixture();
  const Utterance& u = f.corpus.test[0];
  const AttackResult r = pgd_attack(f.recognizer, u.audio, Transcript{Word::nine, Word::nine}, AttackConfig{0.0, 0.0, 5, 0});
  REQUIRE(r.adversarial.samples == u.audio.samples);
  for (double d : r.delta) REQUIRE(d == 0.0);
  REQUIRE(r.achieved_transcript == f.recognizer.decode(u.audio, false));
}

TEST_CASE("perturbation stays inside the budget and the sample range", "[attack][property]") {
  const Fixture& f = fixture();
  Rng rng(2);
  for (double eps : {0.01, 0.05, 0.5}) {
    for (int k = 0; k < 3; ++k) {
      const Utterance& u = f.corpus.test[static_cast<std::size_t>(k)];
      const Transcript target = sample_target(rng, u.transcript);
      if (min_frames(f.recognizer.graph, target) > frame_count(u.audio.size(), {})) continue;
      const AttackResult r = pgd_attack(f.recognizer, u.audio, target, AttackConfig::for_epsilon(eps, 30));
      REQUIRE(r.delta.size() == u.audio.size());
      REQUIRE(r.delta_linf.size() == 30);
      REQUIRE(r.loss_trace.size() == 31);
      for (double l : r.delta_linf) REQUIRE(l <= eps + 1e-12);
      for (std::size_t i = 0; i < r.delta.size(); ++i) {
        REQUIRE(std::abs(r.delta[i]) <= eps + 1e-12);
        const double x = u.audio.samples[i];
        REQUIRE(r.adversarial.samples[i] == (r.delta[i] == 0.0 ? x : std::clamp(x + r.delta[i], -1.0, 1.0)));
        REQUIRE(std::abs(r.adversarial.samples[i]) <= 1.0);
      }
      REQUIRE(r.achieved_transcript == f.recognizer.decode(r.adversarial, false));
      REQUIRE(words_of_path(f.recognizer.graph, r.aligned_states.frame_states) == target);
    }
  }
}

TEST_CASE("waveform loss gradient matches central differences", "[attack][property]") {
  const Fixture& f = fixture();
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Utterance& u = f.corpus.test[static_cast<std::size_t>(trial)];
    const Transcript target = sample_target(rng, u.transcript);
    const auto frames = frame_count(u.audio.size(), {});
    if (min_frames(f.recognizer.graph, target) > frames) continue;
    const std::vector<int> states = uniform_align(f.recognizer.graph, target, frames);
    const WaveformGradient g = target_loss_gradient(f.recognizer, u.audio, states);
    std::vector<double> dir(u.audio.size());
    double norm = 0.0;
    for (double& d : dir) {
      d = rng.normal();
      norm += d * d;
    }
    double analytic = 0.0;
    for (std::size_t i = 0; i < dir.size(); ++i) {
      dir[i] /= std::sqrt(norm);
      analytic += g.grad[i] * dir[i];
    }
    const double h = 1e-5;
    Waveform up = u.audio, down = u.audio;
    for (std::size_t i = 0; i < dir.size(); ++i) {
      up.samples[i] += h * dir[i];
      down.samples[i] -= h * dir[i];
    }
    const double numeric = (target_loss_gradient(f.recognizer, up, states).loss -
                            target_loss_gradient(f.recognizer, down, states).loss) / (2.0 * h);
    INFO("trial " << trial << " analytic " << analytic << " numeric " << numeric);
    REQUIRE(std::abs(analytic - numeric) <= 1e-3 * std::max(std::abs(numeric), 1e-6));
  }
}

TEST_CASE("a target longer than the utterance is infeasible", "[attack]") {
  const Fixture& f = fixture();
  const Waveform short_clip{std::vector<double>(f.corpus.test[0].audio.samples.begin(),
                                                f.corpus.test[0].audio.samples.begin() + 1600),
                            16000};
  REQUIRE_THROWS_AS(pgd_attack(f.recognizer, short_clip, Transcript{Word::one, Word::two}, AttackConfig::for_epsilon(0.1, 5)),
                    InfeasibleAlignment);
}

TEST_CASE("target loss falls on at least 90% of steps", "[attack][property][!mayfail]") {
  const Fixture& f = fixture();
  Rng rng(4);
  std::size_t falls = 0, steps = 0;
  for (int k = 0; k < 5; ++k) {
    const Utterance& u = f.corpus.test[static_cast<std::size_t>(k)];
    const Transcript target = sample_target(rng, u.transcript);
    if (min_frames(f.recognizer.graph, target) > frame_count(u.audio.size(), {})) continue;
    const AttackResult r = pgd_attack(f.recognizer, u.audio, target, AttackConfig::for_epsilon(0.05, 100));
    for (std::size_t i = 1; i < r.loss_trace.size(); ++i) {
      falls += r.loss_trace[i] <= r.loss_trace[i - 1];
      ++steps;
    }
  }
  const double fraction = static_cast<double>(falls) / static_cast<double>(steps);
  INFO("non-increasing fraction " << fraction);
  CHECK(fraction >= 0.9);
}

TEST_CASE("a larger budget does not weaken the attack", "[attack][property][slow]") {
  const Fixture& f = fixture();
  const std::size_t n = 50;
  std::vector<Transcript> targets(n);
  Rng rng(5);
  for (std::size_t i = 0; i < n; ++i) {
    const Utterance& u = f.corpus.test[i];
    do {
      targets[i] = sample_target(rng, u.transcript);
    } while (min_frames(f.recognizer.graph, targets[i]) > frame_count(u.audio.size(), {}));
  }
  auto mean_target_wer = [&](double eps) {
    std::vector<double> w(n);
    parallel_for(n, [&](std::size_t i) {
      const AttackResult r = pgd_attack(f.recognizer, f.corpus.test[i].audio, targets[i], AttackConfig::for_epsilon(eps, 100));
      w[i] = sfaguard::wer(targets[i], r.achieved_transcript).wer();
    });
    double s = 0.0;
    for (double v : w) s += v;
    return s / static_cast<double>(n);
  };
  const double weak = mean_target_wer(0.01);
  const double strong = mean_target_wer(0.05);
  INFO("target WER at 0.01: " << weak << ", at 0.05: " << strong);
  REQUIRE(strong <= weak + 10.0);
}
