#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance suite. Everything here is deliberately naive.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "sfaguard/corpus.hpp"
#include "sfaguard/frontend.hpp"
#include "sfaguard/hmm.hpp"
#include "sfaguard/rng.hpp"

namespace oracle {

using sfaguard::HmmGraph;
using sfaguard::Matrix;
using sfaguard::Transcript;
using sfaguard::Word;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Words spelled by a state path: a word starts whenever a word's first state
// is entered from anything other than itself.
inline Transcript path_words(const HmmGraph& g, std::span<const int> states) {
  Transcript out;
  const int spw = g.config().states_per_word;
  const int word_states = g.num_words() * spw;
  for (std::size_t t = 0; t < states.size(); ++t) {
    const int s = states[t];
    if (s < word_states && s % spw == 0 && (t == 0 || states[t - 1] != s)) out.push_back(static_cast<Word>(s / spw));
  }
  return out;
}

struct PathScore {
  double score = kNegInf;
  std::vector<int> states;
  Transcript words;
};

// Depth-first enumeration of every legal length-T path. Calls visit(states)
// for each complete path. Returns false if more than `limit` paths exist.
inline bool enumerate_paths(const HmmGraph& g, std::size_t T, std::size_t limit,
                            const std::function<void(const std::vector<int>&)>& visit) {
  const int n = g.num_states();
  std::size_t count = 0;
  std::vector<int> path;
  bool overflow = false;
  std::function<void()> rec = [&] {
    if (overflow) return;
    if (path.size() == T) {
      if (!g.is_final(path.back())) return;
      const auto words = path_words(g, path).size();
      if (words < 1 || words > static_cast<std::size_t>(g.config().max_words)) return;
      if (++count > limit) {
        overflow = true;
        return;
      }
      visit(path);
      return;
    }
    for (int s = 0; s < n; ++s) {
      const bool ok = path.empty() ? g.initial_log_prob(s) != kNegInf : g.transition_log_prob(path.back(), s) != kNegInf;
      if (!ok) continue;
      path.push_back(s);
      // Prune prefixes that already exceed the word limit.
      if (path_words(g, path).size() <= static_cast<std::size_t>(g.config().max_words)) rec();
      path.pop_back();
    }
  };
  rec();
  return !overflow;
}

inline double score_path(const HmmGraph& g, const Matrix& lp, const std::vector<int>& p) {
  const double wip = g.config().word_insertion_penalty;
  const int spw = g.config().states_per_word;
  const int word_states = g.num_words() * spw;
  double s = g.initial_log_prob(p[0]) + lp(0, p[0]);
  if (p[0] < word_states && p[0] % spw == 0) s += wip;
  for (std::size_t t = 1; t < p.size(); ++t) {
    s += g.transition_log_prob(p[t - 1], p[t]) + lp(static_cast<Eigen::Index>(t), p[t]);
    if (p[t] < word_states && p[t] % spw == 0 && p[t - 1] != p[t]) s += wip;
  }
  return s;
}

inline std::size_t count_paths(const HmmGraph& g, std::size_t T, std::size_t limit) {
  std::size_t c = 0;
  if (!enumerate_paths(g, T, limit, [&](const std::vector<int>&) { ++c; })) return limit + 1;
  return c;
}

// Best unconstrained path, or nothing when the graph has more than `limit` paths.
inline std::optional<PathScore> best_path(const HmmGraph& g, const Matrix& lp, std::size_t limit) {
  PathScore best;
  const bool ok = enumerate_paths(g, static_cast<std::size_t>(lp.rows()), limit, [&](const std::vector<int>& p) {
    const double s = score_path(g, lp, p);
    if (s > best.score) best = {s, p, path_words(g, p)};
  });
  if (!ok) return std::nullopt;
  return best;
}

// Best path spelling exactly `transcript`.
inline std::optional<PathScore> best_aligned_path(const HmmGraph& g, const Matrix& lp, std::span<const Word> transcript,
                                                  std::size_t limit) {
  PathScore best;
  const Transcript want(transcript.begin(), transcript.end());
  const bool ok = enumerate_paths(g, static_cast<std::size_t>(lp.rows()), limit, [&](const std::vector<int>& p) {
    if (path_words(g, p) != want) return;
    const double s = score_path(g, lp, p);
    if (s > best.score) best = {s, p, want};
  });
  if (!ok) return std::nullopt;
  return best;
}

inline Matrix random_log_probs(sfaguard::Rng& rng, std::size_t T, int states) {
  Matrix m(static_cast<Eigen::Index>(T), states);
  for (Eigen::Index t = 0; t < m.rows(); ++t) {
    for (int s = 0; s < states; ++s) m(t, s) = std::log(rng.uniform(1e-3, 1.0));
  }
  return m;
}

// Unit-cost edit distance by plain recursion over the three operations.
inline int edit_distance(std::span<const Word> a, std::span<const Word> b) {
  if (a.empty()) return static_cast<int>(b.size());
  if (b.empty()) return static_cast<int>(a.size());
  const int sub = edit_distance(a.subspan(1), b.subspan(1)) + (a[0] == b[0] ? 0 : 1);
  if (a[0] == b[0]) return sub;  // matching a shared head is always optimal
  const int del = edit_distance(a.subspan(1), b) + 1;
  const int ins = edit_distance(a, b.subspan(1)) + 1;
  return std::min({sub, del, ins});
}

// Calls visit(ref, hyp) for every pair with 1 <= |ref| and |ref| + |hyp| <= max_total,
// up to renaming of words: the joint sequence runs over restricted-growth strings.
inline void for_each_sequence_pair(int max_total, const std::function<void(const Transcript&, const Transcript&)>& visit) {
  std::vector<int> seq;
  std::function<void(int, int)> grow = [&](int total, int next_new) {
    if (static_cast<int>(seq.size()) == total) {
      for (int split = 1; split <= total; ++split) {
        Transcript ref, hyp;
        for (int i = 0; i < total; ++i) (i < split ? ref : hyp).push_back(static_cast<Word>(seq[static_cast<std::size_t>(i)]));
        visit(ref, hyp);
      }
      return;
    }
    for (int v = 0; v <= std::min(next_new, sfaguard::kVocabularySize - 1); ++v) {
      seq.push_back(v);
      grow(total, std::max(next_new, v + 1));
      seq.pop_back();
    }
  };
  for (int total = 1; total <= max_total; ++total) grow(total, 0);
}

// Rank sums of two tie-free samples by direct counting.
inline std::pair<double, double> rank_sums(std::span<const double> a, std::span<const double> b) {
  auto rank = [&](double v) {
    double r = 1.0;
    for (double x : a) r += x < v ? 1.0 : 0.0;
    for (double x : b) r += x < v ? 1.0 : 0.0;
    return r;
  };
  double ra = 0.0, rb = 0.0;
  for (double v : a) ra += rank(v);
  for (double v : b) rb += rank(v);
  return {ra, rb};
}

}  // namespace oracle
