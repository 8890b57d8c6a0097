#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "sfaguard/acoustic.hpp"
#include "sfaguard/corpus.hpp"
#include "sfaguard/hmm.hpp"
#include "sfaguard/preprocess.hpp"

namespace sfaguard {

struct TrainingOptions {
  int ce_epochs = 3;
  int viterbi_epochs = 5;
  int batch_size = 256;
  GraphConfig graph;
  PreprocessOptions preprocess;
  std::ostream* log = nullptr;  // progress and skip warnings
};

struct TrainingTelemetry {
  std::vector<double> epoch_loss;             // mean frame cross-entropy per epoch
  std::vector<double> alignment_log_score;    // summed forced-alignment score per realignment, then after training
  std::size_t training_items = 0;
  std::size_t skipped_items = 0;
  std::size_t frames = 0;
};

/// Hybrid recognizer: MFCC front-end, MLP state posteriors, word-loop HMM.
struct Recognizer {
  MlpModel model;
  AdamState adam;
  HmmGraph graph;
  Pipeline pipeline = Pipeline::baseline;
  PreprocessOptions preprocess;
  TrainingTelemetry telemetry;

  /// Frame log posteriors of x as given: no defense transform.
  Matrix log_probs(const Waveform& x) const;
  /// Decodes x, optionally passing it through the pipeline's defense first.
  Transcript decode(const Waveform& x, bool with_defense) const;
};

/// Trains on flat-start labels (states spread evenly between the energy
/// endpoints, silence outside) for ce_epochs, then runs
/// viterbi_epochs rounds of forced realignment followed by one epoch each.
/// Utterances too short to align are skipped; throws InfeasibleAlignment if
/// nothing is left.
Recognizer train_recognizer(std::span<const Utterance> train, Pipeline pipeline, std::uint64_t seed,
                            const TrainingOptions& options = {});

void save_recognizer(const std::filesystem::path& path, const Recognizer& r);
Recognizer load_recognizer(const std::filesystem::path& path);

}  // namespace sfaguard
