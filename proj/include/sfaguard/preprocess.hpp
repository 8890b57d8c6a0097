#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "sfaguard/corpus.hpp"
#include "sfaguard/dsp.hpp"

namespace sfaguard {

/// Defense pre-processing a recognizer is trained with.
enum class Pipeline { baseline, bas_sfa, sfa, lpf, sfa_lpf };

inline constexpr Pipeline kAllPipelines[] = {Pipeline::baseline, Pipeline::bas_sfa, Pipeline::sfa, Pipeline::lpf,
                                             Pipeline::sfa_lpf};

std::string_view pipeline_name(Pipeline p);
Pipeline parse_pipeline(std::string_view name);

/// Order of the two stages in sfa_lpf.
enum class CompositionOrder { lpf_then_sfa, sfa_then_lpf };

struct PreprocessOptions {
  CompositionOrder order = CompositionOrder::lpf_then_sfa;
};

/// The 7 kHz / 7.5 kHz / 60 dB low-pass used by the lpf pipelines.
const FirFilter& defense_lowpass();

/// Transform applied at inference. Baseline is the identity; bas_sfa applies
/// SFA like the sfa pipeline.
Waveform apply_defense(Pipeline p, const Waveform& x, const PreprocessOptions& opt = {});

/// Training views of one utterance: bas_sfa yields the original and its SFA
/// copy, every other pipeline yields one transformed signal.
std::vector<Waveform> training_views(Pipeline p, const Waveform& x, const PreprocessOptions& opt = {});

}  // namespace sfaguard
