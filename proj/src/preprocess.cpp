#include "sfaguard/preprocess.hpp"

#include "sfaguard/error.hpp"
#include "sfaguard/sfa.hpp"

namespace sfaguard {

std::string_view pipeline_name(Pipeline p) {
  switch (p) {
    case Pipeline::baseline: return "baseline";
    case Pipeline::bas_sfa: return "bas_sfa";
    case Pipeline::sfa: return "sfa";
    case Pipeline::lpf: return "lpf";
    case Pipeline::sfa_lpf: return "sfa_lpf";
  }
  throw InvalidArgument("unknown pipeline");
}

Pipeline parse_pipeline(std::string_view name) {
  for (Pipeline p : kAllPipelines) {
    if (pipeline_name(p) == name) return p;
  }
  throw InvalidArgument("unknown pipeline: " + std::string(name));
}

const FirFilter& defense_lowpass() {
  static const FirFilter filter = design_lowpass(kSampleRate, 7000.0, 7500.0, 60.0);
  return filter;
}

Waveform apply_defense(Pipeline p, const Waveform& x, const PreprocessOptions& opt) {
  switch (p) {
    case Pipeline::baseline: return x;
    case Pipeline::bas_sfa:
    case Pipeline::sfa: return sfa_transform(x);
    case Pipeline::lpf: return apply_fir(defense_lowpass(), x);
    case Pipeline::sfa_lpf:
      if (opt.order == CompositionOrder::lpf_then_sfa) return sfa_transform(apply_fir(defense_lowpass(), x));
      return apply_fir(defense_lowpass(), sfa_transform(x));
  }
  throw InvalidArgument("unknown pipeline");
}

std::vector<Waveform> training_views(Pipeline p, const Waveform& x, const PreprocessOptions& opt) {
  if (p == Pipeline::bas_sfa) return {x, sfa_transform(x)};
  return {apply_defense(p, x, opt)};
}

}  // namespace sfaguard
