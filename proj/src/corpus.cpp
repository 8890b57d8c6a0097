#include "sfaguard/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "sfaguard/error.hpp"
#include "sfaguard/parallel.hpp"
#include "sfaguard/rng.hpp"
#include "sfaguard/wav.hpp"

namespace sfaguard {

namespace {

constexpr std::array<std::string_view, kVocabularySize> kWordNames = {
    "zero", "oh", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine"};

// Formant glide endpoints (Hz), third formant, and amplitude-modulation rate per word.
struct WordSignature {
  double f1_start, f1_end, f2_start, f2_end, f3, am_rate;
};

constexpr std::array<WordSignature, kVocabularySize> kSignatures = {{
    {350, 550, 2000, 2600, 2900, 0},   // zero
    {500, 450, 850, 800, 2500, 6},     // oh
    {650, 800, 1200, 1700, 2600, 0},   // one
    {300, 320, 2500, 1800, 3200, 12},  // two
    {450, 280, 3000, 3400, 3800, 0},   // three
    {750, 550, 1100, 950, 2400, 20},   // four
    {850, 950, 1500, 2100, 2700, 0},   // five
    {400, 400, 4200, 4600, 5200, 9},   // six
    {600, 350, 1900, 1400, 2800, 0},   // seven
    {550, 700, 2900, 2300, 3400, 16},  // eight
    {300, 600, 1300, 1100, 2600, 4},   // nine
}};

constexpr double kPeak = 0.9;
constexpr double kSnrDb = 30.0;

// Two-pole resonator with unity gain at DC; coefficients follow the centre
// frequency sample by sample.
class Resonator {
 public:
  Resonator(double bandwidth_hz, int sample_rate) : bandwidth_(bandwidth_hz), rate_(sample_rate) {}

  double step(double x, double freq_hz) {
    const double r = std::exp(-std::numbers::pi * bandwidth_ / rate_);
    const double c = -r * r;
    const double b = 2.0 * r * std::cos(2.0 * std::numbers::pi * freq_hz / rate_);
    const double a = 1.0 - b - c;
    const double y = a * x + b * y1_ + c * y2_;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  double bandwidth_;
  int rate_;
  double y1_ = 0.0, y2_ = 0.0;
};

void append_silence(std::vector<double>& out, double seconds, int sample_rate) {
  out.insert(out.end(), static_cast<std::size_t>(std::lround(seconds * sample_rate)), 0.0);
}

// Impulse-train source through a glottal low-pass and lip radiation, then a
// cascade of three formant resonators gliding over the word.
void append_word(std::vector<double>& out, Word w, double f0, Rng& rng, int sample_rate) {
  const auto& sig = kSignatures[static_cast<std::size_t>(w)];
  const double duration = rng.uniform(0.15, 0.25);
  const double shift = rng.uniform(0.97, 1.03);
  const double gain = rng.uniform(0.6, 1.0);
  const double pitch = f0 * rng.uniform(0.95, 1.05);
  const auto n = static_cast<std::size_t>(std::lround(duration * sample_rate));
  const double ramp = 0.02;
  Resonator glottal(100.0, sample_rate), r1(80.0, sample_rate), r2(120.0, sample_rate), r3(200.0, sample_rate);
  double phase = rng.uniform();
  double prev = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double u = t / duration;
    // Falling pitch contour over the word.
    phase += pitch * (1.0 - 0.15 * u) / sample_rate;
    double pulse = 0.0;
    if (phase >= 1.0) {
      phase -= 1.0;
      pulse = 1.0;
    }
    const double g = glottal.step(pulse, 0.0);
    const double radiated = g - prev;
    prev = g;
    double v = r1.step(radiated, shift * (sig.f1_start + (sig.f1_end - sig.f1_start) * u));
    v = r2.step(v, shift * (sig.f2_start + (sig.f2_end - sig.f2_start) * u));
    v = r3.step(v, shift * sig.f3);
    double env = std::min({1.0, t / ramp, (duration - t) / ramp});
    env = 0.5 - 0.5 * std::cos(std::numbers::pi * std::max(0.0, env));
    if (sig.am_rate > 0) env *= (1.0 + 0.5 * std::sin(2.0 * std::numbers::pi * sig.am_rate * t)) / 1.5;
    out.push_back(gain * env * v);
  }
}

void validate_words(std::span<const Word> transcript) {
  if (transcript.empty()) throw InvalidArgument("transcript must not be empty");
  for (Word w : transcript) {
    if (static_cast<int>(w) >= kVocabularySize) throw InvalidArgument("word outside the digit vocabulary");
  }
}

}  // namespace

std::string_view word_name(Word w) {
  const auto i = static_cast<std::size_t>(w);
  if (i >= kWordNames.size()) throw InvalidArgument("word outside the digit vocabulary");
  return kWordNames[i];
}

Word parse_word(std::string_view token) {
  for (std::size_t i = 0; i < kWordNames.size(); ++i) {
    if (kWordNames[i] == token) return static_cast<Word>(i);
  }
  throw InvalidArgument("unknown word: " + std::string(token));
}

Transcript parse_transcript(std::string_view text) {
  Transcript out;
  std::istringstream in{std::string(text)};
  std::string token;
  while (in >> token) out.push_back(parse_word(token));
  return out;
}

std::string format_transcript(std::span<const Word> words) {
  std::string out;
  for (Word w : words) {
    if (!out.empty()) out += ' ';
    out += word_name(w);
  }
  return out;
}

Waveform synth_digit_utterance(std::span<const Word> transcript, std::uint64_t seed, int sample_rate) {
  validate_words(transcript);
  if (sample_rate != kSampleRate) throw InvalidArgument("corpus audio is synthesized at 16 kHz only");

  Rng rng(seed);
  std::vector<double> s;
  const double f0 = rng.uniform(100.0, 200.0);
  append_silence(s, rng.uniform(0.10, 0.15), sample_rate);
  for (std::size_t i = 0; i < transcript.size(); ++i) {
    if (i > 0) append_silence(s, rng.uniform(0.05, 0.15), sample_rate);
    append_word(s, transcript[i], f0, rng, sample_rate);
  }
  append_silence(s, rng.uniform(0.10, 0.15), sample_rate);

  double peak = 0.0;
  for (double v : s) peak = std::max(peak, std::abs(v));
  double energy = 0.0;
  for (double& v : s) {
    v *= kPeak / peak;
    energy += v * v;
  }
  const double rms = std::sqrt(energy / static_cast<double>(s.size()));
  const double noise_std = rms * std::pow(10.0, -kSnrDb / 20.0);
  for (double& v : s) v = std::clamp(v + noise_std * rng.normal(), -1.0, 1.0);

  return Waveform{std::move(s), sample_rate};
}

Corpus build_corpus(std::size_t n_train, std::size_t n_test, std::uint64_t seed) {
  if (n_train == 0 || n_test == 0) throw InvalidArgument("corpus splits must be non-empty");
  Corpus corpus;
  corpus.seed = seed;
  corpus.train.resize(n_train);
  corpus.test.resize(n_test);

  auto make = [&](std::size_t index, Utterance& u, const char* prefix, std::size_t local) {
    Rng rng(derive_seed(seed, index));
    const int length = rng.between(1, kMaxTranscriptWords);
    for (int k = 0; k < length; ++k) u.transcript.push_back(static_cast<Word>(rng.below(kVocabularySize)));
    u.audio = synth_digit_utterance(u.transcript, rng.next());
    char id[32];
    std::snprintf(id, sizeof id, "%s_%05zu", prefix, local);
    u.id = id;
  };
  parallel_for(n_train + n_test, [&](std::size_t i) {
    if (i < n_train) {
      make(i, corpus.train[i], "train", i);
    } else {
      make(i, corpus.test[i - n_train], "test", i - n_train);
    }
  });
  return corpus;
}

void write_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "wav", ec);
  if (ec) throw IoError("cannot create " + (dir / "wav").string() + ": " + ec.message());
  std::ofstream manifest(dir / "manifest.tsv");
  if (!manifest) throw IoError("cannot write " + (dir / "manifest.tsv").string());
  manifest << "# seed\t" << corpus.seed << '\n';
  auto emit = [&](const std::vector<Utterance>& split, const char* name) {
    for (const auto& u : split) {
      const auto rel = fs::path("wav") / (u.id + ".wav");
      write_wav(dir / rel, u.audio);
      manifest << name << '\t' << u.id << '\t' << rel.generic_string() << '\t' << format_transcript(u.transcript)
               << '\n';
    }
  };
  emit(corpus.train, "train");
  emit(corpus.test, "test");
  if (!manifest) throw IoError("failed writing manifest");
}

Corpus read_corpus(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.tsv");
  if (!manifest) throw IoError("cannot read " + (dir / "manifest.tsv").string());
  Corpus corpus;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    if (fields.size() == 2 && fields[0] == "# seed") {
      corpus.seed = std::stoull(fields[1]);
      continue;
    }
    if (fields.size() != 4) throw FormatError("malformed manifest line: " + line);
    Utterance u;
    u.id = fields[1];
    u.transcript = parse_transcript(fields[3]);
    u.audio = read_wav(dir / fields[2]);
    if (fields[0] == "train") {
      corpus.train.push_back(std::move(u));
    } else if (fields[0] == "test") {
      corpus.test.push_back(std::move(u));
    } else {
      throw FormatError("unknown split in manifest: " + fields[0]);
    }
  }
  return corpus;
}

}  // namespace sfaguard
