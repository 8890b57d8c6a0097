#include "sfaguard/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "sfaguard/error.hpp"

namespace sfaguard {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Incoming {
  int from;
  double log_prob;
  bool enters_word;
};

}  // namespace

HmmGraph::HmmGraph(GraphConfig cfg) : cfg_(cfg) {
  if (cfg_.num_words < 1 || cfg_.states_per_word < 2) throw InvalidArgument("graph: need >= 1 word of >= 2 states");
  if (cfg_.silence_states == 1 || cfg_.silence_states < 0) throw InvalidArgument("graph: silence model needs 0 or >= 2 states");
  if (!(cfg_.self_loop > 0.0 && cfg_.self_loop < 1.0)) throw InvalidArgument("graph: self-loop probability must be in (0, 1)");
  if (cfg_.max_words < 1) throw InvalidArgument("graph: max_words must be positive");

  num_states_ = cfg_.num_words * cfg_.states_per_word + cfg_.silence_states;
  arcs_.resize(static_cast<std::size_t>(num_states_));
  const double stay = std::log(cfg_.self_loop);
  const double move = std::log(1.0 - cfg_.self_loop);
  const int entries = cfg_.num_words + (has_silence() ? 1 : 0);
  for (int s = 0; s < num_states_; ++s) {
    auto& out = arcs_[static_cast<std::size_t>(s)];
    out.push_back({s, stay, false});
    const int w = word_of(s);
    const bool last = w >= 0 ? s == word_last(w) : s == silence_last();
    if (!last) {
      out.push_back({s + 1, move, false});
    } else if (w >= 0) {
      const double each = move - std::log(static_cast<double>(entries));
      for (int v = 0; v < cfg_.num_words; ++v) out.push_back({word_first(v), each, true});
      if (has_silence()) out.push_back({silence_first(), each, false});
    } else {
      const double each = move - std::log(static_cast<double>(cfg_.num_words));
      for (int v = 0; v < cfg_.num_words; ++v) out.push_back({word_first(v), each, true});
    }
  }
  initial_.assign(static_cast<std::size_t>(num_states_), kNegInf);
  const double init = -std::log(static_cast<double>(entries));
  for (int v = 0; v < cfg_.num_words; ++v) initial_[static_cast<std::size_t>(word_first(v))] = init;
  if (has_silence()) initial_[static_cast<std::size_t>(silence_first())] = init;

  dense_.assign(static_cast<std::size_t>(num_states_) * static_cast<std::size_t>(num_states_), kNegInf);
  for (int s = 0; s < num_states_; ++s) {
    for (const Arc& a : arcs(s)) dense_[static_cast<std::size_t>(s * num_states_ + a.to)] = a.log_prob;
  }
}

int HmmGraph::word_of(int state) const {
  if (state < 0 || state >= num_states_) throw InvalidArgument("state index out of range");
  return state < silence_first() ? state / cfg_.states_per_word : -1;
}

bool HmmGraph::is_final(int state) const {
  const int w = word_of(state);
  return w >= 0 ? state == word_last(w) : state == silence_last();
}

double HmmGraph::transition_log_prob(int from, int to) const {
  if (from < 0 || to < 0 || from >= num_states_ || to >= num_states_) return kNegInf;
  return dense_[static_cast<std::size_t>(from * num_states_ + to)];
}

bool HmmGraph::transition_enters_word(int from, int to) const {
  return from != to && is_word_first(to) && transition_log_prob(from, to) > kNegInf;
}

std::string HmmGraph::describe() const {
  std::ostringstream out;
  out.precision(17);
  out << "num_words=" << cfg_.num_words << '\n'
      << "states_per_word=" << cfg_.states_per_word << '\n'
      << "silence_states=" << cfg_.silence_states << '\n'
      << "self_loop=" << cfg_.self_loop << '\n'
      << "max_words=" << cfg_.max_words << '\n'
      << "word_insertion_penalty=" << cfg_.word_insertion_penalty << '\n'
      << "num_states=" << num_states_ << '\n';
  return out.str();
}

HmmGraph build_graph() { return HmmGraph(GraphConfig{}); }
HmmGraph build_graph(const GraphConfig& cfg) { return HmmGraph(cfg); }

DecodeResult viterbi(const HmmGraph& graph, const Matrix& log_probs) {
  const int S = graph.num_states();
  const auto T = static_cast<std::size_t>(log_probs.rows());
  if (T == 0) throw InvalidArgument("viterbi: no frames");
  if (log_probs.cols() != S) throw InvalidArgument("viterbi: log-prob columns must match graph states");
  const int C = graph.config().max_words + 1;  // words emitted so far: 0..max_words
  const double wip = graph.config().word_insertion_penalty;

  std::vector<std::vector<Incoming>> incoming(static_cast<std::size_t>(S));
  for (int s = 0; s < S; ++s) {
    for (const Arc& a : graph.arcs(s)) incoming[static_cast<std::size_t>(a.to)].push_back({s, a.log_prob, a.enters_word});
  }
  for (auto& in : incoming) {
    std::sort(in.begin(), in.end(), [](const Incoming& a, const Incoming& b) { return a.from < b.from; });
  }

  const std::size_t width = static_cast<std::size_t>(S) * static_cast<std::size_t>(C);
  auto idx = [S](int c, int s) { return static_cast<std::size_t>(c) * static_cast<std::size_t>(S) + static_cast<std::size_t>(s); };
  std::vector<double> prev(width, kNegInf), cur(width, kNegInf);
  std::vector<int> back(T * width, -1);

  for (int s = 0; s < S; ++s) {
    const double init = graph.initial_log_prob(s);
    if (init == kNegInf) continue;
    const int c = graph.word_of(s) >= 0 ? 1 : 0;
    prev[idx(c, s)] = init + (c == 1 ? wip : 0.0) + log_probs(0, s);
  }
  for (std::size_t t = 1; t < T; ++t) {
    std::fill(cur.begin(), cur.end(), kNegInf);
    int* bp = back.data() + t * width;
    for (int s = 0; s < S; ++s) {
      const double emit = log_probs(static_cast<Eigen::Index>(t), s);
      for (int c = 0; c < C; ++c) {
        double best = kNegInf;
        int arg = -1;
        for (const Incoming& in : incoming[static_cast<std::size_t>(s)]) {
          const int pc = in.enters_word ? c - 1 : c;
          if (pc < 0) continue;
          const double cand = prev[idx(pc, in.from)] + in.log_prob + (in.enters_word ? wip : 0.0);
          if (cand > best) {
            best = cand;
            arg = static_cast<int>(idx(pc, in.from));
          }
        }
        if (arg >= 0) {
          cur[idx(c, s)] = best + emit;
          bp[idx(c, s)] = arg;
        }
      }
    }
    std::swap(prev, cur);
  }

  double best = kNegInf;
  int arg = -1;
  for (int s = 0; s < S; ++s) {
    if (!graph.is_final(s)) continue;
    for (int c = 1; c < C; ++c) {
      if (prev[idx(c, s)] > best) {
        best = prev[idx(c, s)];
        arg = static_cast<int>(idx(c, s));
      }
    }
  }
  DecodeResult r;
  if (arg < 0) return r;  // no legal path fits in T frames
  r.log_score = best;
  r.states.resize(T);
  for (std::size_t t = T; t-- > 0;) {
    r.states[t] = arg % S;
    if (t > 0) arg = back[t * width + static_cast<std::size_t>(arg)];
  }
  r.words = words_of_path(graph, r.states);
  return r;
}

Transcript viterbi_decode(const HmmGraph& graph, const Matrix& log_probs) { return viterbi(graph, log_probs).words; }

std::size_t min_frames(const HmmGraph& graph, std::span<const Word> transcript) {
  return transcript.size() * static_cast<std::size_t>(graph.config().states_per_word);
}

namespace {

// Linear chain of HMM states for a transcript: [sil] w1 [sil] w2 ... wn [sil].
struct Chain {
  std::vector<int> states;
  std::vector<int> segment;     // segment index per chain position
  std::vector<int> seg_first;   // first chain position per segment
  std::vector<int> seg_last;
  std::vector<bool> seg_silence;
};

Chain build_chain(const HmmGraph& graph, std::span<const Word> transcript) {
  Chain ch;
  auto add_segment = [&](int first_state, int count, bool silence) {
    const int seg = static_cast<int>(ch.seg_first.size());
    ch.seg_first.push_back(static_cast<int>(ch.states.size()));
    for (int i = 0; i < count; ++i) {
      ch.states.push_back(first_state + i);
      ch.segment.push_back(seg);
    }
    ch.seg_last.push_back(static_cast<int>(ch.states.size()) - 1);
    ch.seg_silence.push_back(silence);
  };
  const int spw = graph.config().states_per_word;
  const int sil = graph.config().silence_states;
  if (graph.has_silence()) add_segment(graph.silence_first(), sil, true);
  for (Word w : transcript) {
    const int wi = static_cast<int>(w);
    if (wi >= graph.num_words()) throw InvalidArgument("forced_align: word not in graph");
    add_segment(graph.word_first(wi), spw, false);
    if (graph.has_silence()) add_segment(graph.silence_first(), sil, true);
  }
  return ch;
}

}  // namespace

AlignmentResult forced_align(const HmmGraph& graph, const Matrix& log_probs, std::span<const Word> transcript) {
  if (transcript.empty()) throw InvalidArgument("forced_align: empty transcript");
  if (log_probs.cols() != graph.num_states()) throw InvalidArgument("forced_align: log-prob columns must match graph states");
  const auto T = static_cast<std::size_t>(log_probs.rows());
  if (T < min_frames(graph, transcript)) {
    throw InfeasibleAlignment("forced_align: " + std::to_string(T) + " frames cannot hold " +
                              std::to_string(min_frames(graph, transcript)) + " states");
  }
  const Chain ch = build_chain(graph, transcript);
  const int N = static_cast<int>(ch.states.size());
  const int segments = static_cast<int>(ch.seg_first.size());
  const double wip = graph.config().word_insertion_penalty;

  // Predecessors of each chain position, ascending.
  std::vector<std::vector<Incoming>> pred(static_cast<std::size_t>(N));
  auto link = [&](int from, int to) {
    const int fs = ch.states[static_cast<std::size_t>(from)];
    const int ts = ch.states[static_cast<std::size_t>(to)];
    const double lp = from == to ? graph.transition_log_prob(fs, fs) : graph.transition_log_prob(fs, ts);
    const bool enters = from != to && graph.is_word_first(ts) && !ch.seg_silence[static_cast<std::size_t>(ch.segment[static_cast<std::size_t>(to)])] &&
                        ch.seg_first[static_cast<std::size_t>(ch.segment[static_cast<std::size_t>(to)])] == to;
    pred[static_cast<std::size_t>(to)].push_back({from, lp, enters});
  };
  for (int i = 0; i < N; ++i) {
    link(i, i);
    const int seg = ch.segment[static_cast<std::size_t>(i)];
    if (i != ch.seg_last[static_cast<std::size_t>(seg)]) {
      link(i, i + 1);
      continue;
    }
    if (seg + 1 < segments) link(i, ch.seg_first[static_cast<std::size_t>(seg + 1)]);
    if (seg + 2 < segments && ch.seg_silence[static_cast<std::size_t>(seg + 1)]) {
      link(i, ch.seg_first[static_cast<std::size_t>(seg + 2)]);
    }
  }
  for (auto& p : pred) std::sort(p.begin(), p.end(), [](const Incoming& a, const Incoming& b) { return a.from < b.from; });

  std::vector<double> prev(static_cast<std::size_t>(N), kNegInf), cur(static_cast<std::size_t>(N), kNegInf);
  std::vector<int> back(T * static_cast<std::size_t>(N), -1);
  const int first_word_seg = graph.has_silence() ? 1 : 0;
  std::vector<int> starts;
  if (graph.has_silence()) starts.push_back(0);
  starts.push_back(ch.seg_first[static_cast<std::size_t>(first_word_seg)]);
  for (int p : starts) {
    const int s = ch.states[static_cast<std::size_t>(p)];
    prev[static_cast<std::size_t>(p)] = graph.initial_log_prob(s) + (graph.is_word_first(s) ? wip : 0.0) + log_probs(0, s);
  }
  for (std::size_t t = 1; t < T; ++t) {
    std::fill(cur.begin(), cur.end(), kNegInf);
    int* bp = back.data() + t * static_cast<std::size_t>(N);
    for (int i = 0; i < N; ++i) {
      double best = kNegInf;
      int arg = -1;
      for (const Incoming& in : pred[static_cast<std::size_t>(i)]) {
        const double cand = prev[static_cast<std::size_t>(in.from)] + in.log_prob + (in.enters_word ? wip : 0.0);
        if (cand > best) {
          best = cand;
          arg = in.from;
        }
      }
      if (arg >= 0) {
        cur[static_cast<std::size_t>(i)] = best + log_probs(static_cast<Eigen::Index>(t), ch.states[static_cast<std::size_t>(i)]);
        bp[i] = arg;
      }
    }
    std::swap(prev, cur);
  }

  // End in the last word or the trailing silence.
  const int last_word_seg = graph.has_silence() ? segments - 2 : segments - 1;
  std::vector<int> ends = {ch.seg_last[static_cast<std::size_t>(last_word_seg)]};
  if (graph.has_silence()) ends.push_back(N - 1);
  double best = kNegInf;
  int arg = -1;
  for (int p : ends) {
    if (prev[static_cast<std::size_t>(p)] > best) {
      best = prev[static_cast<std::size_t>(p)];
      arg = p;
    }
  }
  if (arg < 0) throw InfeasibleAlignment("forced_align: no path reaches the end of the transcript");
  AlignmentResult r;
  r.log_score = best;
  r.frame_states.resize(T);
  for (std::size_t t = T; t-- > 0;) {
    r.frame_states[t] = ch.states[static_cast<std::size_t>(arg)];
    if (t > 0) arg = back[t * static_cast<std::size_t>(N) + static_cast<std::size_t>(arg)];
  }
  return r;
}

std::vector<int> uniform_align(const HmmGraph& graph, std::span<const Word> transcript, std::size_t frames) {
  if (transcript.empty()) throw InvalidArgument("uniform_align: empty transcript");
  const std::size_t n = min_frames(graph, transcript);
  if (frames < n) throw InfeasibleAlignment("uniform_align: fewer frames than states");
  std::vector<int> states;
  for (Word w : transcript) {
    for (int k = 0; k < graph.config().states_per_word; ++k) states.push_back(graph.word_first(static_cast<int>(w)) + k);
  }
  const std::size_t base = frames / n;
  const std::size_t extra = frames % n;
  std::vector<int> out;
  out.reserve(frames);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t count = base + (i >= n - extra ? 1 : 0);
    out.insert(out.end(), count, states[i]);
  }
  return out;
}

std::vector<int> endpointed_align(const HmmGraph& graph, std::span<const Word> transcript,
                                  std::span<const double> frame_energy_db, double threshold_db) {
  const std::size_t T = frame_energy_db.size();
  const std::size_t need = min_frames(graph, transcript);
  if (T < need) throw InfeasibleAlignment("endpointed_align: fewer frames than states");
  const auto sil = static_cast<std::size_t>(graph.has_silence() ? graph.config().silence_states : 0);
  const double loudest = *std::max_element(frame_energy_db.begin(), frame_energy_db.end());
  std::size_t first = 0, last = T - 1;
  while (first < T && frame_energy_db[first] < loudest - threshold_db) ++first;
  while (last > first && frame_energy_db[last] < loudest - threshold_db) --last;
  std::size_t lead = first, trail = T - 1 - last;
  if (sil == 0 || lead < sil) lead = 0;
  if (sil == 0 || trail < sil) trail = 0;
  if (T - lead - trail < need) return uniform_align(graph, transcript, T);

  auto silence = [&](std::size_t n, std::vector<int>& out) {
    for (std::size_t i = 0; i < sil; ++i) {
      const std::size_t count = n / sil + (i >= sil - n % sil ? 1 : 0);
      out.insert(out.end(), count, graph.silence_first() + static_cast<int>(i));
    }
  };
  std::vector<int> out;
  out.reserve(T);
  if (lead > 0) silence(lead, out);
  const auto body = uniform_align(graph, transcript, T - lead - trail);
  out.insert(out.end(), body.begin(), body.end());
  if (trail > 0) silence(trail, out);
  return out;
}

Transcript words_of_path(const HmmGraph& graph, std::span<const int> states) {
  Transcript words;
  for (std::size_t t = 0; t < states.size(); ++t) {
    const int s = states[t];
    if (graph.is_word_first(s) && (t == 0 || states[t - 1] != s)) words.push_back(static_cast<Word>(graph.word_of(s)));
  }
  return words;
}

bool path_is_legal(const HmmGraph& graph, std::span<const int> states) {
  if (states.empty()) return false;
  if (graph.initial_log_prob(states.front()) == kNegInf) return false;
  for (std::size_t t = 1; t < states.size(); ++t) {
    if (graph.transition_log_prob(states[t - 1], states[t]) == kNegInf) return false;
  }
  const std::size_t words = words_of_path(graph, states).size();
  return graph.is_final(states.back()) && words >= 1 && words <= static_cast<std::size_t>(graph.config().max_words);
}

double path_log_score(const HmmGraph& graph, const Matrix& log_probs, std::span<const int> states) {
  if (!path_is_legal(graph, states)) return kNegInf;
  const double wip = graph.config().word_insertion_penalty;
  double score = graph.initial_log_prob(states[0]) + log_probs(0, states[0]);
  if (graph.is_word_first(states[0])) score += wip;
  for (std::size_t t = 1; t < states.size(); ++t) {
    score += graph.transition_log_prob(states[t - 1], states[t]) + log_probs(static_cast<Eigen::Index>(t), states[t]);
    if (graph.transition_enters_word(states[t - 1], states[t])) score += wip;
  }
  return score;
}

}  // namespace sfaguard
