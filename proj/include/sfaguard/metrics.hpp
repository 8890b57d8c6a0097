#pragma once

#include <cstddef>
#include <span>

#include "sfaguard/corpus.hpp"

namespace sfaguard {

struct WerBreakdown {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t reference_length = 0;

  std::size_t errors() const { return substitutions + deletions + insertions; }
  /// 100 * (S + D + I) / N; may exceed 100.
  double wer() const;
};

/// Unit-cost edit alignment. Among equal-cost alignments the backtrace
/// prefers match, then substitution, then deletion, then insertion.
WerBreakdown wer(std::span<const Word> reference, std::span<const Word> hypothesis);

/// Sums counts across utterances; the pooled WER is total errors over total
/// reference words.
WerBreakdown& operator+=(WerBreakdown& acc, const WerBreakdown& x);

inline constexpr double kRankSumCriticalValue = 17.0;  // lower critical value, n1 = n2 = 5, alpha = 0.05 two-tailed

struct RankSumResult {
  double w = 0.0;  // smaller of the two pooled rank sums
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  bool significance_defined = false;  // only for n1 = n2 = 5
  bool significant = false;           // w < critical_value
};

/// Wilcoxon rank-sum W with average ranks for ties.
RankSumResult wilcoxon_w(std::span<const double> a, std::span<const double> b,
                         double critical_value = kRankSumCriticalValue);

}  // namespace sfaguard
