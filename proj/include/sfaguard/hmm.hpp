#pragma once

#include <span>
#include <string>
#include <vector>

#include "sfaguard/corpus.hpp"
#include "sfaguard/frontend.hpp"

namespace sfaguard {

struct GraphConfig {
  int num_words = kVocabularySize;
  int states_per_word = 8;
  int silence_states = 7;  // 0 disables the silence model
  double self_loop = 0.5;
  int max_words = kMaxTranscriptWords;
  double word_insertion_penalty = 0.0;  // added to the score at every word entry
};

struct Arc {
  int to = 0;
  double log_prob = 0.0;
  bool enters_word = false;
};

/// Word-loop HMM. Word w occupies states [w*S, (w+1)*S) left to right; the
/// silence model follows the word states. A word's last state exits to the
/// first state of any word or of silence; silence exits to any word.
class HmmGraph {
 public:
  explicit HmmGraph(GraphConfig cfg = {});

  const GraphConfig& config() const { return cfg_; }
  int num_states() const { return num_states_; }
  int num_words() const { return cfg_.num_words; }
  bool has_silence() const { return cfg_.silence_states > 0; }

  int word_first(int word) const { return word * cfg_.states_per_word; }
  int word_last(int word) const { return word_first(word) + cfg_.states_per_word - 1; }
  int silence_first() const { return cfg_.num_words * cfg_.states_per_word; }
  int silence_last() const { return silence_first() + cfg_.silence_states - 1; }
  /// Word index of a state, or -1 for silence.
  int word_of(int state) const;
  bool is_word_first(int state) const { return word_of(state) >= 0 && state % cfg_.states_per_word == 0; }

  const std::vector<Arc>& arcs(int state) const { return arcs_[static_cast<std::size_t>(state)]; }
  /// -inf when the state cannot start an utterance.
  double initial_log_prob(int state) const { return initial_[static_cast<std::size_t>(state)]; }
  bool is_final(int state) const;
  /// -inf for an illegal transition.
  double transition_log_prob(int from, int to) const;
  bool transition_enters_word(int from, int to) const;

  /// Plain-text description of the topology, one key=value per line.
  std::string describe() const;

 private:
  GraphConfig cfg_;
  int num_states_ = 0;
  std::vector<std::vector<Arc>> arcs_;
  std::vector<double> initial_;
  std::vector<double> dense_;  // from * num_states + to
};

HmmGraph build_graph();
HmmGraph build_graph(const GraphConfig& cfg);

struct DecodeResult {
  std::vector<int> states;
  Transcript words;
  double log_score = 0.0;
};

struct AlignmentResult {
  std::vector<int> frame_states;
  double log_score = 0.0;
};

/// Best path through the word loop (1 to max_words words). Ties go to the
/// lower state index.
DecodeResult viterbi(const HmmGraph& graph, const Matrix& log_probs);
Transcript viterbi_decode(const HmmGraph& graph, const Matrix& log_probs);

/// Best path restricted to the transcript's words in order, with optional
/// silence before, between and after words. Throws InfeasibleAlignment when
/// there are fewer frames than the transcript's word states.
AlignmentResult forced_align(const HmmGraph& graph, const Matrix& log_probs, std::span<const Word> transcript);

/// Equal split of T frames over the transcript's word states; the remainder
/// goes one frame each to the last states.
std::vector<int> uniform_align(const HmmGraph& graph, std::span<const Word> transcript, std::size_t frames);

/// Flat-start labels with endpointing: frames before the first and after the
/// last frame within threshold_db of the loudest go uniformly to the silence
/// states, the span between to uniform_align. A side shorter than the
/// silence chain is left to the words; falls back to uniform_align over all
/// frames when the span cannot hold the transcript.
std::vector<int> endpointed_align(const HmmGraph& graph, std::span<const Word> transcript,
                                  std::span<const double> frame_energy_db, double threshold_db = 25.0);

/// Minimum frame count to align a transcript.
std::size_t min_frames(const HmmGraph& graph, std::span<const Word> transcript);

/// Word sequence spelled by a state path.
Transcript words_of_path(const HmmGraph& graph, std::span<const int> states);

/// Score of a state path under the graph: initial + transitions + acoustic,
/// plus insertion penalties. -inf for an illegal path.
double path_log_score(const HmmGraph& graph, const Matrix& log_probs, std::span<const int> states);

/// True when every consecutive pair is a graph transition and the path
/// starts and ends in legal states.
bool path_is_legal(const HmmGraph& graph, std::span<const int> states);

}  // namespace sfaguard
