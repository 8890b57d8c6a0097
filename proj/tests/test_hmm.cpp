#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "sfaguard/corpus.hpp"
#include "sfaguard/error.hpp"
#include "sfaguard/hmm.hpp"
#include "sfaguard/recognizer.hpp"

using namespace sfaguard;
namespace fs = std::filesystem;

namespace {

GraphConfig tiny(int silence, int max_words) {
  GraphConfig c;
  c.num_words = 2;
  c.states_per_word = 2;
  c.silence_states = silence;
  c.max_words = max_words;
  return c;
}

Matrix forcing(const HmmGraph& g, const std::vector<int>& states) {
  Matrix lp = Matrix::Constant(static_cast<Eigen::Index>(states.size()), g.num_states(), -1000.0);
  for (std::size_t t = 0; t < states.size(); ++t) lp(static_cast<Eigen::Index>(t), states[t]) = 0.0;
  return lp;
}

}  // namespace

TEST_CASE("default graph has 95 states over 11 words and silence", "[hmm]") {
  const HmmGraph g = build_graph();
  REQUIRE(g.num_states() == 95);
  REQUIRE(g.num_words() == 11);
  REQUIRE(g.silence_first() == 88);
  REQUIRE(g.silence_last() == 94);
  REQUIRE(g.word_of(g.word_first(static_cast<int>(Word::oh))) == 1);
  REQUIRE(g.word_of(g.word_first(static_cast<int>(Word::zero))) == 0);
  REQUIRE(g.word_of(90) == -1);
  REQUIRE(g.describe().find("num_states=95") != std::string::npos);
}

TEST_CASE("outgoing transitions normalize", "[hmm][property]") {
  for (const GraphConfig& cfg : {GraphConfig{}, tiny(0, 3), tiny(2, 2)}) {
    const HmmGraph g(cfg);
    for (int s = 0; s < g.num_states(); ++s) {
      double mx = -1e300;
      for (const Arc& a : g.arcs(s)) mx = std::max(mx, a.log_prob);
      double sum = 0.0;
      for (const Arc& a : g.arcs(s)) sum += std::exp(a.log_prob - mx);
      REQUIRE(std::abs(mx + std::log(sum)) <= 1e-9);
      REQUIRE(g.transition_log_prob(s, s) == Catch::Approx(std::log(0.5)).epsilon(1e-15));
    }
    // Initial distribution normalizes too.
    double total = 0.0;
    for (int s = 0; s < g.num_states(); ++s) total += std::exp(g.initial_log_prob(s));
    REQUIRE(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("word models are strictly left to right", "[hmm]") {
  const HmmGraph g = build_graph();
  for (int w = 0; w < 11; ++w) {
    for (int s = g.word_first(w); s < g.word_last(w); ++s) {
      for (int to = 0; to < g.num_states(); ++to) {
        const bool legal = g.transition_log_prob(s, to) != oracle::kNegInf;
        REQUIRE(legal == (to == s || to == s + 1));
      }
    }
  }
  REQUIRE_THROWS_AS(HmmGraph(GraphConfig{.num_words = 11, .states_per_word = 8, .silence_states = 7, .self_loop = 1.0}),
                    InvalidArgument);
}

TEST_CASE("one-hot posteriors force a single word", "[hmm]") {
  const HmmGraph g = build_graph();
  std::vector<int> staircase;
  for (int k = 0; k < 8; ++k) staircase.insert(staircase.end(), 2, g.word_first(static_cast<int>(Word::three)) + k);
  const Matrix lp = forcing(g, staircase);
  REQUIRE(viterbi_decode(g, lp) == Transcript{Word::three});
  const AlignmentResult a = forced_align(g, lp, Transcript{Word::three});
  REQUIRE(a.frame_states == staircase);
}

TEST_CASE("uniform posteriors decode deterministically to a legal path", "[hmm]") {
  const HmmGraph g = build_graph();
  const Matrix lp = Matrix::Constant(40, 95, std::log(1.0 / 95.0));
  const DecodeResult a = viterbi(g, lp);
  const DecodeResult b = viterbi(g, lp);
  REQUIRE(a.states == b.states);
  REQUIRE(!a.words.empty());
  REQUIRE(path_is_legal(g, a.states));
}

TEST_CASE("viterbi and forced alignment agree with path enumeration", "[hmm][oracle]") {
  Rng rng(31);
  int instances = 0;
  for (const GraphConfig& cfg : {tiny(0, 2), tiny(0, 3), tiny(2, 2), tiny(2, 3)}) {
    const HmmGraph g(cfg);
    for (std::size_t T = 2; T <= 8; ++T) {
      if (oracle::count_paths(g, T, 200) > 200) continue;
      for (int rep = 0; rep < 4; ++rep) {
        const Matrix lp = oracle::random_log_probs(rng, T, g.num_states());
        const auto best = oracle::best_path(g, lp, 200);
        REQUIRE(best.has_value());
        const DecodeResult d = viterbi(g, lp);
        REQUIRE(d.log_score == Catch::Approx(best->score).epsilon(1e-12));
        REQUIRE(d.words == best->words);
        REQUIRE(d.states == best->states);

        const Transcript want = best->words;
        const auto aligned = oracle::best_aligned_path(g, lp, want, 200);
        const AlignmentResult fa = forced_align(g, lp, want);
        REQUIRE(fa.log_score == Catch::Approx(aligned->score).epsilon(1e-12));
        REQUIRE(fa.frame_states == aligned->states);

        // A second transcript that the instance can hold.
        const Transcript other{Word::oh};
        if (T >= min_frames(g, other)) {
          const auto o = oracle::best_aligned_path(g, lp, other, 200);
          const AlignmentResult fo = forced_align(g, lp, other);
          REQUIRE(o->score > oracle::kNegInf);
          REQUIRE(fo.log_score == Catch::Approx(o->score).epsilon(1e-12));
        }
        ++instances;
      }
    }
  }
  REQUIRE(instances >= 50);
}

TEST_CASE("forced alignment never beats unconstrained decoding", "[hmm][property]") {
  Rng rng(32);
  const HmmGraph g = build_graph();
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix lp = oracle::random_log_probs(rng, 60, 95);
    Transcript t;
    const int len = rng.between(1, 3);
    for (int k = 0; k < len; ++k) t.push_back(static_cast<Word>(rng.below(11)));
    const AlignmentResult a = forced_align(g, lp, t);
    const DecodeResult d = viterbi(g, lp);
    REQUIRE(a.log_score <= d.log_score + 1e-9);
    REQUIRE(path_is_legal(g, a.frame_states));
    REQUIRE(words_of_path(g, a.frame_states) == t);
    REQUIRE(path_log_score(g, lp, a.frame_states) == Catch::Approx(a.log_score).epsilon(1e-12));
    REQUIRE(path_is_legal(g, d.states));
    REQUIRE(path_log_score(g, lp, d.states) == Catch::Approx(d.log_score).epsilon(1e-12));
  }
}

TEST_CASE("infeasible alignments are reported", "[hmm]") {
  const HmmGraph g = build_graph();
  const Matrix lp = Matrix::Zero(10, 95);
  REQUIRE(min_frames(g, Transcript{Word::one, Word::two}) == 16);
  REQUIRE_THROWS_AS(forced_align(g, lp, Transcript{Word::one, Word::two}), InfeasibleAlignment);
  REQUIRE_THROWS_AS(uniform_align(g, Transcript{Word::one}, 7), InfeasibleAlignment);
}

TEST_CASE("uniform alignment splits frames evenly", "[hmm]") {
  const HmmGraph g = build_graph();
  const int base = g.word_first(static_cast<int>(Word::five));
  const std::vector<int> a = uniform_align(g, Transcript{Word::five}, 16);
  REQUIRE(a.size() == 16);
  for (int k = 0; k < 8; ++k) REQUIRE(std::count(a.begin(), a.end(), base + k) == 2);
  const std::vector<int> b = uniform_align(g, Transcript{Word::five}, 17);
  for (int k = 0; k < 7; ++k) REQUIRE(std::count(b.begin(), b.end(), base + k) == 2);
  REQUIRE(std::count(b.begin(), b.end(), base + 7) == 3);
  REQUIRE(std::is_sorted(b.begin(), b.end()));
  const std::vector<int> c = uniform_align(g, Transcript{Word::two, Word::nine}, 37);
  REQUIRE(path_is_legal(g, c));
  REQUIRE(words_of_path(g, c) == Transcript{Word::two, Word::nine});
}

TEST_CASE("endpointed alignment labels quiet edges as silence", "[hmm]") {
  const HmmGraph g = build_graph();
  std::vector<double> energy(10, -100.0);
  energy.insert(energy.end(), 20, 0.0);
  energy.insert(energy.end(), 10, -100.0);
  const std::vector<int> a = endpointed_align(g, Transcript{Word::four}, energy);
  REQUIRE(a.size() == 40);
  for (int t = 0; t < 10; ++t) REQUIRE(g.word_of(a[static_cast<std::size_t>(t)]) == -1);
  for (int t = 30; t < 40; ++t) REQUIRE(g.word_of(a[static_cast<std::size_t>(t)]) == -1);
  const std::vector<int> body(a.begin() + 10, a.begin() + 30);
  REQUIRE(body == uniform_align(g, Transcript{Word::four}, 20));
  REQUIRE(path_is_legal(g, a));
  // Ten silent frames over seven states: the last three take two.
  REQUIRE(std::count(a.begin(), a.begin() + 10, g.silence_first()) == 1);
  REQUIRE(std::count(a.begin(), a.begin() + 10, g.silence_last()) == 2);

  // A lead shorter than the silence chain stays with the words.
  std::vector<double> short_lead(3, -100.0);
  short_lead.insert(short_lead.end(), 20, 0.0);
  const std::vector<int> b = endpointed_align(g, Transcript{Word::four}, short_lead);
  REQUIRE(b == uniform_align(g, Transcript{Word::four}, 23));

  // Not enough loud frames for the transcript: plain uniform alignment.
  std::vector<double> tiny_span(20, -100.0);
  tiny_span[10] = 0.0;
  REQUIRE(endpointed_align(g, Transcript{Word::four}, tiny_span) == uniform_align(g, Transcript{Word::four}, 20));
}

TEST_CASE("training is deterministic and realignment does not lower the alignment score", "[hmm][slow]") {
  const Corpus c = build_corpus(200, 20, 5);
  TrainingOptions opt;
  const Recognizer a = train_recognizer(c.train, Pipeline::baseline, 9, opt);
  const Recognizer b = train_recognizer(c.train, Pipeline::baseline, 9, opt);
  REQUIRE(a.model.w1 == b.model.w1);
  REQUIRE(a.model.w3 == b.model.w3);
  REQUIRE(a.telemetry.epoch_loss == b.telemetry.epoch_loss);
  REQUIRE(a.telemetry.epoch_loss.size() == 8);
  REQUIRE(a.telemetry.skipped_items == 0);

  const auto& scores = a.telemetry.alignment_log_score;
  REQUIRE(scores.size() == 6);
  for (std::size_t i = 1; i < scores.size(); ++i) {
    INFO("realignment " << i << ": " << scores[i - 1] << " -> " << scores[i]);
    CHECK(scores[i] >= scores[i - 1]);
  }

  const fs::path dir = fs::temp_directory_path() / "sfaguard_test_recognizer";
  fs::create_directories(dir);
  save_recognizer(dir / "r.model", a);
  const Recognizer r = load_recognizer(dir / "r.model");
  REQUIRE(r.pipeline == a.pipeline);
  REQUIRE(r.model.w2 == a.model.w2);
  REQUIRE(r.graph.num_states() == 95);
  for (const auto& u : c.test) REQUIRE(r.decode(u.audio, true) == a.decode(u.audio, true));
}
