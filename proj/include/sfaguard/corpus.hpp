#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sfaguard {

inline constexpr int kSampleRate = 16000;

/// Mono audio. Corpus audio is 16 kHz with every sample in [-1, 1]; derived
/// signals (e.g. SFA output) keep the nominal rate but are not range-bound.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration_seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// Digit vocabulary; zero has the two pronunciations "zero" and "oh".
enum class Word : std::uint8_t { zero, oh, one, two, three, four, five, six, seven, eight, nine };

inline constexpr int kVocabularySize = 11;
inline constexpr int kMaxTranscriptWords = 7;

using Transcript = std::vector<Word>;

std::string_view word_name(Word w);
/// Throws InvalidArgument for words outside the vocabulary.
Word parse_word(std::string_view token);
/// Whitespace-separated words.
Transcript parse_transcript(std::string_view text);
std::string format_transcript(std::span<const Word> words);

struct Utterance {
  Waveform audio;
  Transcript transcript;
  std::string id;
};

struct Corpus {
  std::vector<Utterance> train;
  std::vector<Utterance> test;
  std::uint64_t seed = 0;
};

/// Cascade formant synthesis: a pitched pulse train through three gliding
/// resonators per word, seeded pauses between words, Gaussian noise at 30 dB
/// SNR. Deterministic in (transcript, seed).
Waveform synth_digit_utterance(std::span<const Word> transcript, std::uint64_t seed,
                               int sample_rate = kSampleRate);

Corpus build_corpus(std::size_t n_train, std::size_t n_test, std::uint64_t seed);

/// Writes <dir>/wav/<id>.wav for every utterance and a tab-separated
/// manifest (split, id, relative path, transcript) at <dir>/manifest.tsv.
void write_corpus(const std::filesystem::path& dir, const Corpus& corpus);
Corpus read_corpus(const std::filesystem::path& dir);

}  // namespace sfaguard
