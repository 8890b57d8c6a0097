// Command-line driver: corpus generation, training, attacks, evaluation and
// the full experiment.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "sfaguard/attack.hpp"
#include "sfaguard/corpus.hpp"
#include "sfaguard/dsp.hpp"
#include "sfaguard/error.hpp"
#include "sfaguard/frontend.hpp"
#include "sfaguard/harness.hpp"
#include "sfaguard/metrics.hpp"
#include "sfaguard/parallel.hpp"
#include "sfaguard/recognizer.hpp"
#include "sfaguard/sfa.hpp"
#include "sfaguard/wav.hpp"

namespace fs = std::filesystem;
using namespace sfaguard;

namespace {

std::vector<Utterance>& split(Corpus& c, const std::string& name) {
  if (name == "train") return c.train;
  if (name == "test") return c.test;
  throw InvalidArgument("unknown split " + name);
}

void print_wer(const char* label, const WerBreakdown& w) {
  std::printf("%s WER %.2f%% (S=%zu D=%zu I=%zu N=%zu)\n", label, w.wer(), w.substitutions, w.deletions, w.insertions,
              w.reference_length);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SFA / low-pass pre-processing defenses for a digit recognizer"};
  app.require_subcommand(1);

  auto* corpus_cmd = app.add_subcommand("corpus", "synthetic digit corpus");
  corpus_cmd->require_subcommand(1);
  auto* build = corpus_cmd->add_subcommand("build", "generate and write a corpus");
  std::size_t n_train = 800, n_test = 100;
  std::uint64_t corpus_seed = 1;
  std::string corpus_out;
  build->add_option("--train", n_train, "training utterances")->capture_default_str();
  build->add_option("--test", n_test, "test utterances")->capture_default_str();
  build->add_option("--seed", corpus_seed, "corpus seed")->capture_default_str();
  build->add_option("--out", corpus_out, "output directory")->required();

  auto* train = app.add_subcommand("train", "train one recognizer variant");
  std::string variant = "baseline", corpus_dir, model_out;
  std::uint64_t seed = 1;
  int ce_epochs = 3, viterbi_epochs = 5, batch = 256;
  std::string order = "lpf_then_sfa";
  train->add_option("--variant", variant, "baseline | bas_sfa | sfa | lpf | sfa_lpf")->capture_default_str();
  train->add_option("--corpus", corpus_dir, "corpus directory")->required();
  train->add_option("--seed", seed, "training seed")->capture_default_str();
  train->add_option("--ce-epochs", ce_epochs)->capture_default_str();
  train->add_option("--viterbi-epochs", viterbi_epochs)->capture_default_str();
  train->add_option("--batch", batch)->capture_default_str();
  train->add_option("--order", order, "sfa_lpf order: lpf_then_sfa | sfa_then_lpf")->capture_default_str();
  train->add_option("--out", model_out, "recognizer file")->required();

  auto* attack = app.add_subcommand("attack", "craft targeted PGD examples");
  std::string model_path, attack_out, split_name = "test";
  double epsilon = 0.5;
  int iters = 200;
  std::size_t count = 20;
  attack->add_option("--model", model_path, "recognizer file")->required();
  attack->add_option("--corpus", corpus_dir, "corpus directory")->required();
  attack->add_option("--split", split_name)->capture_default_str();
  attack->add_option("--epsilon", epsilon, "L-infinity budget")->capture_default_str();
  attack->add_option("--iters", iters, "PGD iterations")->capture_default_str();
  attack->add_option("--count", count, "number of examples")->capture_default_str();
  attack->add_option("--seed", seed, "target seed")->capture_default_str();
  attack->add_option("--out", attack_out, "output directory")->required();

  auto* evaluate = app.add_subcommand("evaluate", "WER on clean or adversarial audio");
  std::string adversarial_dir;
  bool defense = false;
  evaluate->add_option("--model", model_path, "recognizer file")->required();
  evaluate->add_option("--corpus", corpus_dir, "corpus directory (clean evaluation)");
  evaluate->add_option("--split", split_name)->capture_default_str();
  evaluate->add_option("--adversarial", adversarial_dir, "attack output directory; scores target WER");
  evaluate->add_flag("--defense", defense, "apply the model's pre-processing before decoding");

  auto* experiment = app.add_subcommand("experiment", "full multi-variant, multi-run experiment");
  std::string config_path, report_out;
  bool quiet = false;
  experiment->add_option("--config", config_path, "JSON config file")->required();
  experiment->add_option("--out", report_out, "report directory")->required();
  experiment->add_flag("--quiet", quiet, "no progress output");

  auto* taps = app.add_subcommand("taps", "print the defense low-pass filter taps");
  auto* features = app.add_subcommand("features", "write the 39-dim feature matrix of a WAV file");
  std::string wav_in, feat_out;
  features->add_option("--wav", wav_in)->required();
  features->add_option("--out", feat_out)->required();
  auto* sfa_cmd = app.add_subcommand("sfa", "fit SFA on a WAV file and print the transform");
  sfa_cmd->add_option("--wav", wav_in)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*build) {
      const Corpus c = build_corpus(n_train, n_test, corpus_seed);
      write_corpus(corpus_out, c);
      std::printf("wrote %zu train / %zu test utterances to %s\n", c.train.size(), c.test.size(), corpus_out.c_str());
    } else if (*train) {
      const Corpus c = read_corpus(corpus_dir);
      TrainingOptions opt;
      opt.ce_epochs = ce_epochs;
      opt.viterbi_epochs = viterbi_epochs;
      opt.batch_size = batch;
      opt.preprocess.order = order == "lpf_then_sfa" ? CompositionOrder::lpf_then_sfa
                             : order == "sfa_then_lpf" ? CompositionOrder::sfa_then_lpf
                                                       : throw InvalidArgument("unknown order " + order);
      opt.log = &std::cerr;
      const Recognizer r = train_recognizer(c.train, parse_pipeline(variant), seed, opt);
      save_recognizer(model_out, r);
      std::printf("trained %s on %zu utterances (%zu frames); model written to %s\n", variant.c_str(),
                  r.telemetry.training_items, r.telemetry.frames, model_out.c_str());
    } else if (*attack) {
      Corpus c = read_corpus(corpus_dir);
      const Recognizer r = load_recognizer(model_path);
      const auto cfg = AttackConfig::for_epsilon(epsilon, iters, seed);
      const auto& utts = split(c, split_name);
      const auto results = generate_attacks(r, utts, count, cfg);
      fs::create_directories(fs::path(attack_out) / "wav");
      std::ofstream manifest(fs::path(attack_out) / "attacks.tsv");
      if (!manifest) throw IoError("cannot write " + attack_out + "/attacks.tsv");
      manifest << "# model " << model_path << "\n";
      manifest << "id\tsource\tpath\ttarget\tepsilon\titerations\tachieved\tfinal_loss\n";
      for (std::size_t i = 0; i < results.size(); ++i) {
        const Utterance& u = utts[i % utts.size()];
        char id[64];
        std::snprintf(id, sizeof id, "adv_%05zu", i);
        const std::string rel = std::string("wav/") + id + ".wav";
        write_wav(fs::path(attack_out) / rel, results[i].adversarial);
        manifest << id << '\t' << u.id << '\t' << rel << '\t' << format_transcript(results[i].target_transcript) << '\t'
                 << epsilon << '\t' << iters << '\t' << format_transcript(results[i].achieved_transcript) << '\t'
                 << results[i].loss_trace.back() << '\n';
      }
      if (!manifest) throw IoError("failed writing attack manifest");
      std::printf("wrote %zu adversarial examples to %s\n", results.size(), attack_out.c_str());
    } else if (*evaluate) {
      const Recognizer r = load_recognizer(model_path);
      if (!adversarial_dir.empty()) {
        std::ifstream in(fs::path(adversarial_dir) / "attacks.tsv");
        if (!in) throw IoError("cannot read " + adversarial_dir + "/attacks.tsv");
        std::string line;
        WerBreakdown total;
        while (std::getline(in, line)) {
          if (line.empty() || line[0] == '#' || line.rfind("id\t", 0) == 0) continue;
          std::vector<std::string> f;
          std::stringstream ss(line);
          for (std::string x; std::getline(ss, x, '\t');) f.push_back(x);
          if (f.size() < 4) throw FormatError("bad attack manifest line: " + line);
          const Waveform w = read_wav(fs::path(adversarial_dir) / f[2]);
          total += wer(parse_transcript(f[3]), r.decode(w, defense));
        }
        print_wer("adversarial target", total);
      } else {
        if (corpus_dir.empty()) throw InvalidArgument("evaluate needs --corpus or --adversarial");
        Corpus c = read_corpus(corpus_dir);
        print_wer("clean", evaluate_clean(r, split(c, split_name), defense));
      }
    } else if (*experiment) {
      const ExperimentConfig cfg = load_experiment_config(config_path);
      const ExperimentReport report = run_experiment(cfg, quiet ? nullptr : &std::cerr);
      emit_report(report, report_out);
      std::cout << format_table(report);
    } else if (*taps) {
      write_taps(std::cout, defense_lowpass());
    } else if (*features) {
      write_feature_file(feat_out, compute_features(read_wav(wav_in)).frames);
    } else if (*sfa_cmd) {
      std::cout << serialize(fit_sfa(read_wav(wav_in)));
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
