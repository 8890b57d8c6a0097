#include "sfaguard/harness.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "sfaguard/error.hpp"
#include "sfaguard/parallel.hpp"
#include "sfaguard/rng.hpp"

namespace sfaguard {

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool contains(const std::vector<Pipeline>& v, Pipeline p) { return std::find(v.begin(), v.end(), p) != v.end(); }

std::string_view order_name(CompositionOrder o) {
  return o == CompositionOrder::lpf_then_sfa ? "lpf_then_sfa" : "sfa_then_lpf";
}

TrainingOptions training_options(const ExperimentConfig& cfg, std::ostream* log) {
  TrainingOptions opt;
  opt.ce_epochs = cfg.ce_epochs;
  opt.viterbi_epochs = cfg.viterbi_epochs;
  opt.batch_size = cfg.batch_size;
  opt.preprocess.order = cfg.sfa_lpf_order;
  opt.log = log;
  return opt;
}

AttackConfig attack_config(const ExperimentConfig& cfg, double epsilon, std::uint64_t run_seed) {
  AttackConfig a;
  a.epsilon = epsilon;
  a.step_size = std::min(epsilon * cfg.step_fraction, cfg.max_step);
  a.iterations = cfg.attack_iterations;
  a.seed = derive_seed(run_seed, 0xa77ac4);
  return a;
}

double fraction_nonincreasing(const std::vector<double>& trace) {
  if (trace.size() < 2) return 1.0;
  std::size_t ok = 0;
  for (std::size_t k = 1; k < trace.size(); ++k) ok += trace[k] <= trace[k - 1] ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(trace.size() - 1);
}

// Decodes adversarial audio with the evaluated model and fills records; returns the pooled target WER.
WerBreakdown score_attacks(const Recognizer& evaluated, const std::vector<AttackResult>& attacks,
                           std::span<const Utterance> test, bool with_defense, Pipeline variant, int run,
                           double epsilon, std::vector<AttackRecord>& records) {
  std::vector<AttackRecord> out(attacks.size());
  parallel_for(attacks.size(), [&](std::size_t i) {
    const AttackResult& a = attacks[i];
    AttackRecord& rec = out[i];
    rec.variant = variant;
    rec.run = run;
    rec.epsilon = epsilon;
    rec.utterance_id = test[i % test.size()].id;
    rec.target = a.target_transcript;
    rec.achieved_undefended = evaluated.decode(a.adversarial, false);
    rec.achieved_evaluated = with_defense ? evaluated.decode(a.adversarial, true) : rec.achieved_undefended;
    rec.target_wer = wer(rec.target, rec.achieved_evaluated).wer();
    rec.target_wer_undefended = wer(rec.target, rec.achieved_undefended).wer();
    rec.final_loss = a.loss_trace.empty() ? 0.0 : a.loss_trace.back();
    rec.max_delta_linf = a.delta_linf.empty() ? 0.0 : *std::max_element(a.delta_linf.begin(), a.delta_linf.end());
    rec.loss_nonincreasing_fraction = fraction_nonincreasing(a.loss_trace);
  });
  WerBreakdown total;
  for (auto& rec : out) {
    total += wer(rec.target, rec.achieved_evaluated);
    records.push_back(std::move(rec));
  }
  return total;
}

void finalize(Cell& c) {
  const auto n = static_cast<double>(c.run_wer.size());
  c.mean = std::accumulate(c.run_wer.begin(), c.run_wer.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : c.run_wer) ss += (v - c.mean) * (v - c.mean);
  c.std_dev = c.run_wer.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (n_train < 1 || n_test < 1) throw InvalidArgument("config: corpus splits must be non-empty");
  if (variants.empty()) throw InvalidArgument("config: no variants");
  if (runs < 1) throw InvalidArgument("config: runs must be >= 1");
  if (!(epsilon_table >= 0.0)) throw InvalidArgument("config: epsilon_table must be >= 0");
  for (double e : epsilon_sweep) {
    if (!(e >= 0.0)) throw InvalidArgument("config: sweep epsilons must be >= 0");
  }
  if (attack_iterations < 1) throw InvalidArgument("config: attack_iterations must be >= 1");
  if (!(step_fraction > 0.0)) throw InvalidArgument("config: step_fraction must be positive");
  if (!(max_step > 0.0)) throw InvalidArgument("config: max_step must be positive");
  if (attack_source == AttackSource::baseline && !contains(variants, Pipeline::baseline)) {
    throw InvalidArgument("config: attack_source=baseline requires the baseline variant");
  }
  for (Pipeline p : sweep_variants) {
    if (!contains(variants, p)) throw InvalidArgument("config: sweep variant not among variants");
  }
  if (ce_epochs < 0 || viterbi_epochs < 0 || batch_size < 1) throw InvalidArgument("config: bad training schedule");
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream out;
  auto list = [](const std::vector<Pipeline>& v) {
    std::string s;
    for (Pipeline p : v) s += (s.empty() ? "" : ",") + std::string(pipeline_name(p));
    return s;
  };
  out << "n_train=" << n_train << '\n'
      << "n_test=" << n_test << '\n'
      << "corpus_seed=" << corpus_seed << '\n'
      << "variants=" << list(variants) << '\n'
      << "runs=" << runs << '\n'
      << "base_seed=" << base_seed << '\n'
      << "epsilon_table=" << fmt17(epsilon_table) << '\n'
      << "epsilon_sweep=";
  for (std::size_t i = 0; i < epsilon_sweep.size(); ++i) out << (i ? "," : "") << fmt17(epsilon_sweep[i]);
  out << '\n'
      << "sweep_variants=" << list(sweep_variants) << '\n'
      << "attack_iterations=" << attack_iterations << '\n'
      << "step_fraction=" << fmt17(step_fraction) << '\n'
      << "max_step=" << fmt17(max_step) << '\n'
      << "n_adversarial=" << n_adversarial << '\n'
      << "n_sweep_adversarial=" << n_sweep_adversarial << '\n'
      << "apply_defense_at_inference=" << (apply_defense_at_inference ? "true" : "false") << '\n'
      << "attack_source=" << (attack_source == AttackSource::per_model ? "per_model" : "baseline") << '\n'
      << "sfa_lpf_order=" << order_name(sfa_lpf_order) << '\n'
      << "ce_epochs=" << ce_epochs << '\n'
      << "viterbi_epochs=" << viterbi_epochs << '\n'
      << "batch_size=" << batch_size << '\n';
  return out.str();
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("config: expected a JSON object");
  ExperimentConfig c;
  auto pipelines = [](const nlohmann::json& v) {
    std::vector<Pipeline> out;
    for (const auto& s : v) out.push_back(parse_pipeline(s.get<std::string>()));
    return out;
  };
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "n_train") c.n_train = v.get<std::size_t>();
      else if (key == "n_test") c.n_test = v.get<std::size_t>();
      else if (key == "corpus_seed") c.corpus_seed = v.get<std::uint64_t>();
      else if (key == "variants") c.variants = pipelines(v);
      else if (key == "runs") c.runs = v.get<int>();
      else if (key == "base_seed") c.base_seed = v.get<std::uint64_t>();
      else if (key == "epsilon_table") c.epsilon_table = v.get<double>();
      else if (key == "epsilon_sweep") c.epsilon_sweep = v.get<std::vector<double>>();
      else if (key == "sweep_variants") c.sweep_variants = pipelines(v);
      else if (key == "attack_iterations") c.attack_iterations = v.get<int>();
      else if (key == "step_fraction") c.step_fraction = v.get<double>();
      else if (key == "max_step") c.max_step = v.get<double>();
      else if (key == "n_adversarial") c.n_adversarial = v.get<std::size_t>();
      else if (key == "n_sweep_adversarial") c.n_sweep_adversarial = v.get<std::size_t>();
      else if (key == "apply_defense_at_inference") c.apply_defense_at_inference = v.get<bool>();
      else if (key == "attack_source") {
        const auto s = v.get<std::string>();
        if (s == "per_model") c.attack_source = AttackSource::per_model;
        else if (s == "baseline") c.attack_source = AttackSource::baseline;
        else throw FormatError("config: attack_source must be per_model or baseline");
      } else if (key == "sfa_lpf_order") {
        const auto s = v.get<std::string>();
        if (s == "lpf_then_sfa") c.sfa_lpf_order = CompositionOrder::lpf_then_sfa;
        else if (s == "sfa_then_lpf") c.sfa_lpf_order = CompositionOrder::sfa_then_lpf;
        else throw FormatError("config: sfa_lpf_order must be lpf_then_sfa or sfa_then_lpf");
      } else if (key == "ce_epochs") c.ce_epochs = v.get<int>();
      else if (key == "viterbi_epochs") c.viterbi_epochs = v.get<int>();
      else if (key == "batch_size") c.batch_size = v.get<int>();
      else throw FormatError("config: unknown key " + key);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  // Sweeps default to every configured variant.
  if (!j.contains("sweep_variants")) c.sweep_variants = c.variants;
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

std::string_view condition_name(Condition c) { return c == Condition::clean ? "clean" : "adversarial"; }

WerBreakdown evaluate_clean(const Recognizer& r, std::span<const Utterance> test, bool with_defense) {
  std::vector<WerBreakdown> per(test.size());
  parallel_for(test.size(), [&](std::size_t i) { per[i] = wer(test[i].transcript, r.decode(test[i].audio, with_defense)); });
  WerBreakdown total;
  for (const auto& w : per) total += w;
  return total;
}

std::vector<AttackResult> generate_attacks(const Recognizer& attacker, std::span<const Utterance> test,
                                           std::size_t count, const AttackConfig& attack) {
  if (test.empty()) throw InvalidArgument("generate_attacks: empty test set");
  std::vector<AttackResult> out(count);
  const HmmGraph& graph = attacker.graph;
  parallel_for(count, [&](std::size_t slot) {
    const Utterance& u = test[slot % test.size()];
    Rng rng(derive_seed(attack.seed, slot));
    const std::size_t frames = frame_count(u.audio.size(), FrontendConfig{});
    Transcript target = sample_target(rng, u.transcript);
    // Resample until the target fits in the utterance's frames.
    for (int tries = 0; min_frames(graph, target) > frames; ++tries) {
      if (tries > 1000) throw InfeasibleAlignment("generate_attacks: utterance " + u.id + " too short for any target");
      target = sample_target(rng, u.transcript);
    }
    out[slot] = pgd_attack(attacker, u.audio, target, attack);
  });
  return out;
}

VariantResult run_variant(Pipeline variant, const Corpus& corpus, std::uint64_t seed, const ExperimentConfig& cfg,
                          int run_index, std::ostream* log) {
  VariantResult res;
  res.recognizer = train_recognizer(corpus.train, variant, seed, training_options(cfg, log));
  res.clean = evaluate_clean(res.recognizer, corpus.test, cfg.apply_defense_at_inference);
  const auto acfg = attack_config(cfg, cfg.epsilon_table, seed);
  const auto attacks = generate_attacks(res.recognizer, corpus.test, cfg.n_adversarial, acfg);
  res.adversarial = score_attacks(res.recognizer, attacks, corpus.test, cfg.apply_defense_at_inference, variant,
                                  run_index, cfg.epsilon_table, res.attacks);
  return res;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, std::ostream* log) {
  cfg.validate();
  ExperimentReport report;
  report.config = cfg;
  report.config_hash = [&] {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, fnv1a(cfg.canonical()));
    return std::string(buf);
  }();

  const Corpus corpus = build_corpus(cfg.n_train, cfg.n_test, cfg.corpus_seed);
  const bool defend = cfg.apply_defense_at_inference;

  // Budget points: the table epsilon for every variant, then the sweep.
  struct Point {
    double epsilon;
    std::size_t count;
    std::vector<Pipeline> variants;
  };
  std::vector<Point> points = {{cfg.epsilon_table, cfg.n_adversarial, cfg.variants}};
  for (double e : cfg.epsilon_sweep) {
    if (e > 0.0 && e != cfg.epsilon_table && !cfg.sweep_variants.empty()) points.push_back({e, cfg.n_sweep_adversarial, cfg.sweep_variants});
  }

  for (int run = 0; run < cfg.runs; ++run) {
    const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(run);
    report.run_seeds.push_back(seed);
    std::map<Pipeline, Recognizer> models;
    for (Pipeline v : cfg.variants) {
      if (log) *log << "run " << run + 1 << "/" << cfg.runs << ": training " << pipeline_name(v) << '\n';
      models.emplace(v, train_recognizer(corpus.train, v, seed, training_options(cfg, log)));
    }
    for (Pipeline v : cfg.variants) {
      const double clean = evaluate_clean(models.at(v), corpus.test, defend).wer();
      report.cells[{v, Condition::clean, 0.0}].run_wer.push_back(clean);
      const bool zero_in_sweep = std::find(cfg.epsilon_sweep.begin(), cfg.epsilon_sweep.end(), 0.0) != cfg.epsilon_sweep.end();
      if (zero_in_sweep && contains(cfg.sweep_variants, v)) {
        report.cells[{v, Condition::adversarial, 0.0}].run_wer.push_back(clean);
      }
      if (log) *log << "  " << pipeline_name(v) << " clean WER " << clean << "%\n";
    }
    for (const Point& p : points) {
      if (p.count == 0) continue;
      const AttackConfig acfg = attack_config(cfg, p.epsilon, seed);
      std::vector<AttackResult> shared;
      if (cfg.attack_source == AttackSource::baseline) {
        shared = generate_attacks(models.at(Pipeline::baseline), corpus.test, p.count, acfg);
      }
      for (Pipeline v : p.variants) {
        const std::vector<AttackResult> own = cfg.attack_source == AttackSource::per_model
                                                  ? generate_attacks(models.at(v), corpus.test, p.count, acfg)
                                                  : std::vector<AttackResult>{};
        const auto& attacks = cfg.attack_source == AttackSource::per_model ? own : shared;
        const double w = score_attacks(models.at(v), attacks, corpus.test, defend, v, run, p.epsilon, report.attacks).wer();
        report.cells[{v, Condition::adversarial, p.epsilon}].run_wer.push_back(w);
        if (log) *log << "  " << pipeline_name(v) << " eps " << p.epsilon << " target WER " << w << "%\n";
      }
    }
  }

  for (auto& [key, cell] : report.cells) finalize(cell);
  if (contains(cfg.variants, Pipeline::baseline)) {
    for (auto& [key, cell] : report.cells) {
      if (key.variant == Pipeline::baseline) continue;
      const auto base = report.cells.find({Pipeline::baseline, key.condition, key.epsilon});
      if (base == report.cells.end()) continue;
      cell.vs_baseline = wilcoxon_w(base->second.run_wer, cell.run_wer);
    }
  }
  return report;
}

std::string format_records(const ExperimentReport& report) {
  std::ostringstream out;
  out << "variant,condition,epsilon,run,wer\n";
  for (const auto& [key, cell] : report.cells) {
    for (std::size_t r = 0; r < cell.run_wer.size(); ++r) {
      out << pipeline_name(key.variant) << ',' << condition_name(key.condition) << ',' << fmt17(key.epsilon) << ','
          << r << ',' << fmt17(cell.run_wer[r]) << '\n';
    }
  }
  return out.str();
}

std::vector<RecordRow> parse_records(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != "variant,condition,epsilon,run,wer") throw FormatError("records: bad header");
  std::vector<RecordRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[5];
    for (auto& x : f) {
      if (!std::getline(ss, x, ',')) throw FormatError("records: short row: " + line);
    }
    rows.push_back({f[0], f[1], std::stod(f[2]), std::stoi(f[3]), std::stod(f[4])});
  }
  return rows;
}

std::string format_table(const ExperimentReport& report) {
  const auto& cfg = report.config;
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "Average WER over %d run(s); %zu test utterances, %zu adversarial examples at eps=%g; %s\n",
                cfg.runs, cfg.n_test, cfg.n_adversarial, cfg.epsilon_table,
                cfg.apply_defense_at_inference ? "pre-processing applied at inference" : "raw audio at inference");
  out << buf;
  std::snprintf(buf, sizeof buf, "%-10s | %-30s | %-30s\n", "", "Original test set", "Adversarial test set");
  out << buf;
  std::snprintf(buf, sizeof buf, "%-10s | %9s %9s %9s  | %9s %9s %9s\n", "Model", "WER", "Std Dev", "W", "WER", "Std Dev", "W");
  out << buf << std::string(78, '-') << '\n';
  auto cell_text = [&](Pipeline v, Condition c, double e) {
    const auto it = report.cells.find({v, c, e});
    if (it == report.cells.end()) return std::string("        -         -         -");
    const Cell& cell = it->second;
    char w[32];
    if (cell.vs_baseline) {
      std::snprintf(w, sizeof w, "%9g%s", cell.vs_baseline->w, cell.vs_baseline->significant ? "*" : " ");
    } else {
      std::snprintf(w, sizeof w, "%9s ", "-");
    }
    char s[96];
    std::snprintf(s, sizeof s, "%8.2f%% %9.4f %s", cell.mean, cell.std_dev / 100.0, w);
    return std::string(s);
  };
  for (Pipeline v : cfg.variants) {
    std::snprintf(buf, sizeof buf, "%-10s | %s | %s\n", std::string(pipeline_name(v)).c_str(),
                  cell_text(v, Condition::clean, 0.0).c_str(), cell_text(v, Condition::adversarial, cfg.epsilon_table).c_str());
    out << buf;
  }
  out << "Std Dev as a fraction; W is the rank-sum statistic against the baseline (* = W < "
      << kRankSumCriticalValue << ").\n";
  return out.str();
}

void emit_report(const ExperimentReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  auto write = [&](const char* name, const std::string& text) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw IoError("cannot write " + (dir / name).string());
    f << text;
    if (!f) throw IoError("failed writing " + (dir / name).string());
  };
  write("table.txt", format_table(report));
  write("records.csv", format_records(report));

  std::ostringstream sweep;
  sweep << "variant,epsilon,mean_wer,std_dev,runs\n";
  const auto& grid = report.config.epsilon_sweep;
  for (Pipeline v : report.config.sweep_variants) {
    for (double e : grid) {
      const auto it = report.cells.find({v, Condition::adversarial, e});
      if (it == report.cells.end()) continue;
      sweep << pipeline_name(v) << ',' << fmt17(e) << ',' << fmt17(it->second.mean) << ',' << fmt17(it->second.std_dev)
            << ',' << it->second.run_wer.size() << '\n';
    }
  }
  write("sweep.csv", sweep.str());

  std::ostringstream attacks;
  attacks << "variant\trun\tepsilon\titerations\tutterance\ttarget\tachieved\tachieved_undefended\ttarget_wer\tfinal_loss\tmax_delta\n";
  for (const auto& a : report.attacks) {
    attacks << pipeline_name(a.variant) << '\t' << a.run << '\t' << fmt17(a.epsilon) << '\t' << report.config.attack_iterations << '\t' << a.utterance_id << '\t'
            << format_transcript(a.target) << '\t' << format_transcript(a.achieved_evaluated) << '\t'
            << format_transcript(a.achieved_undefended) << '\t' << fmt17(a.target_wer) << '\t' << fmt17(a.final_loss)
            << '\t' << fmt17(a.max_delta_linf) << '\n';
  }
  write("attacks.tsv", attacks.str());

  std::ostringstream meta;
  meta << "config_hash=" << report.config_hash << '\n' << "run_seeds=";
  for (std::size_t i = 0; i < report.run_seeds.size(); ++i) meta << (i ? "," : "") << report.run_seeds[i];
  meta << '\n'
       << "test_scale=" << fmt17(static_cast<double>(report.config.n_test) / 1000.0) << '\n'
       << "adversarial_scale=" << fmt17(static_cast<double>(report.config.n_adversarial) / 1000.0) << '\n'
       << report.config.canonical();
  write("metadata.txt", meta.str());
}

}  // namespace sfaguard
