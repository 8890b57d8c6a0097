#include "sfaguard/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "sfaguard/error.hpp"

namespace sfaguard {

double WerBreakdown::wer() const {
  if (reference_length == 0) return 0.0;
  return 100.0 * static_cast<double>(errors()) / static_cast<double>(reference_length);
}

WerBreakdown& operator+=(WerBreakdown& acc, const WerBreakdown& x) {
  acc.substitutions += x.substitutions;
  acc.deletions += x.deletions;
  acc.insertions += x.insertions;
  acc.reference_length += x.reference_length;
  return acc;
}

WerBreakdown wer(std::span<const Word> ref, std::span<const Word> hyp) {
  if (ref.empty()) throw InvalidArgument("wer: empty reference");
  const std::size_t n = ref.size();
  const std::size_t m = hyp.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }

  WerBreakdown b;
  b.reference_length = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    const std::size_t here = at(i, j);
    if (i > 0 && j > 0 && ref[i - 1] == hyp[j - 1] && here == at(i - 1, j - 1)) {
      --i;
      --j;
    } else if (i > 0 && j > 0 && here == at(i - 1, j - 1) + 1) {
      ++b.substitutions;
      --i;
      --j;
    } else if (i > 0 && here == at(i - 1, j) + 1) {
      ++b.deletions;
      --i;
    } else {
      ++b.insertions;
      --j;
    }
  }
  return b;
}

RankSumResult wilcoxon_w(std::span<const double> a, std::span<const double> b, double critical_value) {
  if (a.empty() || b.empty()) throw InvalidArgument("wilcoxon_w: samples must be non-empty");
  struct Obs {
    double value;
    int group;
  };
  std::vector<Obs> pooled;
  for (double v : a) pooled.push_back({v, 0});
  for (double v : b) pooled.push_back({v, 1});
  std::stable_sort(pooled.begin(), pooled.end(), [](const Obs& x, const Obs& y) { return x.value < y.value; });

  double sums[2] = {0.0, 0.0};
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j].value == pooled[i].value) ++j;
    // Ranks i+1 .. j share their average.
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) sums[pooled[k].group] += rank;
    i = j;
  }
  RankSumResult r;
  r.n1 = a.size();
  r.n2 = b.size();
  r.w = std::min(sums[0], sums[1]);
  r.significance_defined = r.n1 == 5 && r.n2 == 5;
  r.significant = r.significance_defined && r.w < critical_value;
  return r;
}

}  // namespace sfaguard
