#include "sfaguard/recognizer.hpp"

#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "sfaguard/error.hpp"
#include "sfaguard/parallel.hpp"
#include "sfaguard/rng.hpp"

namespace sfaguard {

namespace {

struct TrainingItem {
  Matrix features;
  Transcript transcript;
  std::vector<int> labels;
  bool usable = false;
};

struct FrameRef {
  std::uint32_t item;
  std::uint32_t frame;
};

double run_epoch(Recognizer& r, const std::vector<TrainingItem>& items, std::vector<FrameRef>& pool, Rng& rng,
                 int batch_size) {
  rng.shuffle(pool.begin(), pool.end());
  Matrix batch;
  std::vector<int> labels;
  double total = 0.0;
  for (std::size_t start = 0; start < pool.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t n = std::min(pool.size() - start, static_cast<std::size_t>(batch_size));
    batch.resize(static_cast<Eigen::Index>(n), kFeatureDim);
    labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const FrameRef f = pool[start + i];
      const auto& item = items[f.item];
      batch.row(static_cast<Eigen::Index>(i)) = item.features.row(f.frame);
      labels[i] = item.labels[f.frame];
    }
    total += train_step(r.model, r.adam, batch, labels) * static_cast<double>(n);
  }
  return total / static_cast<double>(pool.size());
}

double realign(const Recognizer& r, std::vector<TrainingItem>& items) {
  std::vector<double> scores(items.size(), 0.0);
  parallel_for(items.size(), [&](std::size_t i) {
    auto& item = items[i];
    if (!item.usable) return;
    const auto a = forced_align(r.graph, forward(r.model, item.features), item.transcript);
    item.labels = a.frame_states;
    scores[i] = a.log_score;
  });
  return std::accumulate(scores.begin(), scores.end(), 0.0);
}

}  // namespace

Matrix Recognizer::log_probs(const Waveform& x) const { return forward(model, compute_features(x).frames); }

Transcript Recognizer::decode(const Waveform& x, bool with_defense) const {
  const Waveform input = with_defense ? apply_defense(pipeline, x, preprocess) : x;
  if (frame_count(input.size(), FrontendConfig{}) == 0) return {};
  return viterbi_decode(graph, log_probs(input));
}

Recognizer train_recognizer(std::span<const Utterance> train, Pipeline pipeline, std::uint64_t seed,
                            const TrainingOptions& options) {
  if (train.empty()) throw InvalidArgument("train_recognizer: empty training set");
  if (options.batch_size < 1) throw InvalidArgument("train_recognizer: batch size must be positive");

  Recognizer r;
  r.pipeline = pipeline;
  r.preprocess = options.preprocess;
  r.graph = build_graph(options.graph);
  if (r.graph.num_states() != kNumStates) throw InvalidArgument("train_recognizer: graph must have 95 states");
  r.model = MlpModel::initialize(derive_seed(seed, 0));
  r.adam = AdamState::for_model(r.model);
  Rng shuffle_rng(derive_seed(seed, 1));

  // Views per utterance are laid out in utterance order.
  std::vector<std::vector<TrainingItem>> per_utt(train.size());
  parallel_for(train.size(), [&](std::size_t i) {
    // Endpoints come from the raw audio so every view shares them.
    const std::vector<double> energy = frame_energy_db(train[i].audio);
    for (Waveform& view : training_views(pipeline, train[i].audio, options.preprocess)) {
      TrainingItem item;
      item.transcript = train[i].transcript;
      const std::size_t frames = frame_count(view.size(), FrontendConfig{});
      if (frames >= min_frames(r.graph, item.transcript)) {
        item.features = compute_features(view).frames;
        const std::size_t shared = std::min(frames, energy.size());
        item.labels = endpointed_align(r.graph, item.transcript, std::span(energy).first(shared));
        // A view longer than the raw audio extends the last label.
        item.labels.resize(frames, item.labels.back());
        item.usable = true;
      }
      per_utt[i].push_back(std::move(item));
    }
  });
  std::vector<TrainingItem> items;
  for (std::size_t i = 0; i < per_utt.size(); ++i) {
    for (auto& item : per_utt[i]) {
      if (!item.usable) {
        ++r.telemetry.skipped_items;
        if (options.log) *options.log << "warning: skipping " << train[i].id << " (too short to align)\n";
      }
      items.push_back(std::move(item));
    }
  }
  r.telemetry.training_items = items.size();

  std::vector<FrameRef> pool;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!items[i].usable) continue;
    for (Eigen::Index t = 0; t < items[i].features.rows(); ++t) {
      pool.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(t)});
    }
  }
  if (pool.empty()) throw InfeasibleAlignment("train_recognizer: no utterance could be aligned");
  r.telemetry.frames = pool.size();

  for (int e = 0; e < options.ce_epochs; ++e) {
    r.telemetry.epoch_loss.push_back(run_epoch(r, items, pool, shuffle_rng, options.batch_size));
    if (options.log) *options.log << "  ce epoch " << e + 1 << " loss " << r.telemetry.epoch_loss.back() << '\n';
  }
  for (int e = 0; e < options.viterbi_epochs; ++e) {
    r.telemetry.alignment_log_score.push_back(realign(r, items));
    r.telemetry.epoch_loss.push_back(run_epoch(r, items, pool, shuffle_rng, options.batch_size));
    if (options.log) {
      *options.log << "  viterbi epoch " << e + 1 << " align " << r.telemetry.alignment_log_score.back() << " loss "
                   << r.telemetry.epoch_loss.back() << '\n';
    }
  }
  if (options.viterbi_epochs > 0) {
    std::vector<TrainingItem> scratch = items;
    r.telemetry.alignment_log_score.push_back(realign(r, scratch));
  }
  return r;
}

namespace {
constexpr const char* kRecognizerMagic = "SFAGUARD-RECOGNIZER 1";
}

void save_recognizer(const std::filesystem::path& path, const Recognizer& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << kRecognizerMagic << '\n'
      << "pipeline=" << pipeline_name(r.pipeline) << '\n'
      << "order=" << (r.preprocess.order == CompositionOrder::lpf_then_sfa ? "lpf_then_sfa" : "sfa_then_lpf") << '\n'
      << r.graph.describe() << "end\n";
  write_checkpoint(out, r.model, r.adam);
  if (!out) throw IoError("failed writing " + path.string());
}

Recognizer load_recognizer(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kRecognizerMagic) throw FormatError(path.string() + ": not a recognizer checkpoint");
  std::map<std::string, std::string> kv;
  while (std::getline(in, line) && line != "end") {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(path.string() + ": malformed header line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  if (line != "end") throw FormatError(path.string() + ": truncated header");
  auto get = [&](const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(path.string() + ": missing " + key);
    return it->second;
  };
  Recognizer r;
  r.pipeline = parse_pipeline(get("pipeline"));
  r.preprocess.order = get("order") == "sfa_then_lpf" ? CompositionOrder::sfa_then_lpf : CompositionOrder::lpf_then_sfa;
  GraphConfig g;
  g.num_words = std::stoi(get("num_words"));
  g.states_per_word = std::stoi(get("states_per_word"));
  g.silence_states = std::stoi(get("silence_states"));
  g.self_loop = std::stod(get("self_loop"));
  g.max_words = std::stoi(get("max_words"));
  g.word_insertion_penalty = std::stod(get("word_insertion_penalty"));
  r.graph = build_graph(g);
  if (r.graph.num_states() != kNumStates) throw FormatError(path.string() + ": graph does not have 95 states");
  read_checkpoint(in, r.model, r.adam);
  return r;
}

}  // namespace sfaguard
