#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sfaguard/attack.hpp"
#include "sfaguard/metrics.hpp"
#include "sfaguard/preprocess.hpp"
#include "sfaguard/recognizer.hpp"

namespace sfaguard {

/// Which recognizer the adversarial audio is crafted against.
enum class AttackSource { per_model, baseline };

struct ExperimentConfig {
  std::size_t n_train = 800;
  std::size_t n_test = 100;
  std::uint64_t corpus_seed = 1;
  std::vector<Pipeline> variants = {std::begin(kAllPipelines), std::end(kAllPipelines)};
  int runs = 5;
  std::uint64_t base_seed = 1;  // run r uses base_seed + r
  double epsilon_table = 0.5;
  std::vector<double> epsilon_sweep = {0.00, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.10};
  std::vector<Pipeline> sweep_variants = {std::begin(kAllPipelines), std::end(kAllPipelines)};
  int attack_iterations = 200;
  double step_fraction = 0.1;  // step size = min(epsilon * step_fraction, max_step)
  double max_step = kMaxStepSize;
  std::size_t n_adversarial = 100;
  std::size_t n_sweep_adversarial = 100;
  bool apply_defense_at_inference = true;
  AttackSource attack_source = AttackSource::per_model;
  CompositionOrder sfa_lpf_order = CompositionOrder::lpf_then_sfa;
  int ce_epochs = 3;
  int viterbi_epochs = 5;
  int batch_size = 256;

  void validate() const;
  /// Canonical one-line-per-field text; hashed into the report metadata.
  std::string canonical() const;
};

ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

enum class Condition { clean, adversarial };
std::string_view condition_name(Condition c);

struct CellKey {
  Pipeline variant;
  Condition condition;
  double epsilon;
  auto operator<=>(const CellKey&) const = default;
};

struct Cell {
  std::vector<double> run_wer;  // one value per run, percent
  double mean = 0.0;
  double std_dev = 0.0;         // sample standard deviation across runs
  std::optional<RankSumResult> vs_baseline;
};

struct AttackRecord {
  Pipeline variant;
  int run = 0;
  double epsilon = 0.0;
  std::string utterance_id;
  Transcript target;
  Transcript achieved_undefended;  // decoded by the attacked model on raw adversarial audio
  Transcript achieved_evaluated;   // decoded under the experiment's inference condition
  double target_wer = 0.0;         // of achieved_evaluated against target
  double target_wer_undefended = 0.0;
  double final_loss = 0.0;
  double max_delta_linf = 0.0;     // largest |delta| seen after any iteration
  double loss_nonincreasing_fraction = 0.0;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::map<CellKey, Cell> cells;
  std::vector<AttackRecord> attacks;
  std::vector<std::uint64_t> run_seeds;
  std::string config_hash;
};

struct VariantResult {
  Recognizer recognizer;
  WerBreakdown clean;
  WerBreakdown adversarial;
  std::vector<AttackRecord> attacks;
};

/// Trains one variant and evaluates it on the clean test set and on
/// n_adversarial PGD samples at epsilon_table crafted against itself.
VariantResult run_variant(Pipeline variant, const Corpus& corpus, std::uint64_t seed, const ExperimentConfig& cfg,
                          int run_index = 0, std::ostream* log = nullptr);

/// Clean WER of a recognizer on a test list, optionally with the defense.
WerBreakdown evaluate_clean(const Recognizer& r, std::span<const Utterance> test, bool with_defense);

/// Attacks the first `count` test utterances (cycling when count exceeds the
/// list); targets are drawn per (seed, utterance slot) so every model and
/// budget sees the same targets.
std::vector<AttackResult> generate_attacks(const Recognizer& attacker, std::span<const Utterance> test,
                                           std::size_t count, const AttackConfig& attack);

ExperimentReport run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr);

/// Writes table.txt, records.csv, sweep.csv, attacks.tsv and metadata.txt.
void emit_report(const ExperimentReport& report, const std::filesystem::path& dir);

std::string format_table(const ExperimentReport& report);
std::string format_records(const ExperimentReport& report);

struct RecordRow {
  std::string variant;
  std::string condition;
  double epsilon = 0.0;
  int run = 0;
  double wer = 0.0;
};
std::vector<RecordRow> parse_records(const std::string& csv);

}  // namespace sfaguard
