#include "sfaguard/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <numbers>

#include <fftw3.h>

#include "sfaguard/error.hpp"

namespace sfaguard {

namespace {

// FFTW planning is not thread-safe; execution with the new-array interface is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

void validate(const FrontendConfig& cfg) {
  if (cfg.frame_length <= 0 || cfg.hop <= 0 || cfg.frame_length > cfg.fft_size) {
    throw InvalidArgument("frontend: need 0 < frame_length <= fft_size and hop > 0");
  }
  if (cfg.num_ceps <= 0 || cfg.num_ceps > cfg.mel_filters) throw InvalidArgument("frontend: need num_ceps <= mel_filters");
  if (cfg.fft_size % 2 != 0) throw InvalidArgument("frontend: fft_size must be even");
}

Matrix mel_filterbank(const FrontendConfig& cfg) {
  const int bins = cfg.fft_size / 2 + 1;
  const double nyquist = cfg.sample_rate / 2.0;
  const double mel_hi = hz_to_mel(nyquist);
  std::vector<double> edges(static_cast<std::size_t>(cfg.mel_filters + 2));
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_hi * static_cast<double>(i) / static_cast<double>(cfg.mel_filters + 1));
  }
  Matrix m = Matrix::Zero(cfg.mel_filters, bins);
  for (int f = 0; f < cfg.mel_filters; ++f) {
    const double lo = edges[static_cast<std::size_t>(f)];
    const double mid = edges[static_cast<std::size_t>(f + 1)];
    const double hi = edges[static_cast<std::size_t>(f + 2)];
    for (int k = 0; k < bins; ++k) {
      const double hz = static_cast<double>(k) * cfg.sample_rate / cfg.fft_size;
      if (hz > lo && hz < hi) m(f, k) = hz <= mid ? (hz - lo) / (mid - lo) : (hi - hz) / (hi - mid);
    }
  }
  return m;
}

Matrix dct_ortho(int num_ceps, int n) {
  Matrix d(num_ceps, n);
  for (int i = 0; i < num_ceps; ++i) {
    const double scale = std::sqrt((i == 0 ? 1.0 : 2.0) / n);
    for (int m = 0; m < n; ++m) d(i, m) = scale * std::cos(std::numbers::pi * i * (m + 0.5) / n);
  }
  return d;
}

std::vector<double> hamming(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (n - 1));
  return w;
}

Matrix apply_delta(const Matrix& c, int window) {
  const Eigen::Index t_count = c.rows();
  double denom = 0.0;
  for (int n = 1; n <= window; ++n) denom += 2.0 * n * n;
  Matrix d = Matrix::Zero(t_count, c.cols());
  for (Eigen::Index t = 0; t < t_count; ++t) {
    for (int n = 1; n <= window; ++n) {
      const Eigen::Index ahead = std::min<Eigen::Index>(t + n, t_count - 1);
      const Eigen::Index behind = std::max<Eigen::Index>(t - n, 0);
      d.row(t) += (n / denom) * (c.row(ahead) - c.row(behind));
    }
  }
  return d;
}

struct Buffers {
  double* real = nullptr;
  fftw_complex* spec = nullptr;
  explicit Buffers(int n) {
    real = fftw_alloc_real(static_cast<std::size_t>(n));
    spec = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
  }
  ~Buffers() {
    fftw_free(real);
    fftw_free(spec);
  }
  Buffers(const Buffers&) = delete;
  Buffers& operator=(const Buffers&) = delete;
};

}  // namespace

struct Frontend::Plans {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
  explicit Plans(int n) {
    std::lock_guard lock(planner_mutex());
    Buffers scratch(n);
    forward = fftw_plan_dft_r2c_1d(n, scratch.real, scratch.spec, FFTW_ESTIMATE);
    inverse = fftw_plan_dft_c2r_1d(n, scratch.spec, scratch.real, FFTW_ESTIMATE);
  }
  ~Plans() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(forward);
    fftw_destroy_plan(inverse);
  }
};

std::size_t frame_count(std::size_t n, const FrontendConfig& cfg) {
  const auto len = static_cast<std::size_t>(cfg.frame_length);
  if (n < len) return 0;
  return 1 + (n - len) / static_cast<std::size_t>(cfg.hop);
}

std::vector<double> frame_energy_db(const Waveform& x, const FrontendConfig& cfg) {
  const std::size_t frames = frame_count(x.size(), cfg);
  std::vector<double> out(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    const double* p = x.samples.data() + f * static_cast<std::size_t>(cfg.hop);
    double e = 0.0;
    for (int i = 0; i < cfg.frame_length; ++i) e += p[i] * p[i];
    out[f] = 10.0 * std::log10(e + 1e-20);
  }
  return out;
}

Frontend::Frontend(FrontendConfig cfg)
    : cfg_(cfg),
      window_((validate(cfg), hamming(cfg.frame_length))),
      mel_(mel_filterbank(cfg)),
      dct_(dct_ortho(cfg.num_ceps, cfg.mel_filters)),
      plans_(std::make_unique<Plans>(cfg.fft_size)) {}

Frontend::~Frontend() = default;

Matrix Frontend::mfcc(const Waveform& x, FrontendTrace* trace) const {
  const std::size_t frames = frame_count(x.size(), cfg_);
  if (frames == 0) throw InvalidArgument("mfcc: signal shorter than one frame");
  const int bins = cfg_.fft_size / 2 + 1;
  const auto t_count = static_cast<Eigen::Index>(frames);
  Matrix ceps(t_count, cfg_.num_ceps);
  if (trace) {
    trace->signal_length = x.size();
    trace->spectrum_re.resize(t_count, bins);
    trace->spectrum_im.resize(t_count, bins);
    trace->mel_energy.resize(t_count, cfg_.mel_filters);
  }
#pragma omp parallel
  {
    Buffers buf(cfg_.fft_size);
    Eigen::VectorXd power(bins);
#pragma omp for schedule(static)
    for (Eigen::Index t = 0; t < t_count; ++t) {
      const double* src = x.samples.data() + t * cfg_.hop;
      for (int n = 0; n < cfg_.frame_length; ++n) buf.real[n] = src[n] * window_[static_cast<std::size_t>(n)];
      std::fill(buf.real + cfg_.frame_length, buf.real + cfg_.fft_size, 0.0);
      fftw_execute_dft_r2c(plans_->forward, buf.real, buf.spec);
      for (int k = 0; k < bins; ++k) {
        power(k) = buf.spec[k][0] * buf.spec[k][0] + buf.spec[k][1] * buf.spec[k][1];
        if (trace) {
          trace->spectrum_re(t, k) = buf.spec[k][0];
          trace->spectrum_im(t, k) = buf.spec[k][1];
        }
      }
      const Eigen::VectorXd energy = mel_ * power;
      if (trace) trace->mel_energy.row(t) = energy.transpose();
      const Eigen::VectorXd log_energy = energy.cwiseMax(cfg_.log_floor).array().log().matrix();
      ceps.row(t) = (dct_ * log_energy).transpose();
    }
  }
  return ceps;
}

FeatureSequence Frontend::features(const Waveform& x, FrontendTrace* trace) const {
  return add_deltas(mfcc(x, trace), cfg_.delta_window, cfg_);
}

std::vector<double> Frontend::backward(const FrontendTrace& trace, const Matrix& grad) const {
  const Eigen::Index t_count = trace.mel_energy.rows();
  const int nc = cfg_.num_ceps;
  if (grad.rows() != t_count || grad.cols() != cfg_.feature_dim()) {
    throw InvalidArgument("frontend_backward: gradient shape does not match the feature matrix");
  }
  // Deltas: features = [c | D c | D D c].
  const Matrix g_dd = grad.middleCols(2 * nc, nc);
  const Matrix g_d = grad.middleCols(nc, nc) + delta_backward(g_dd, cfg_.delta_window);
  const Matrix g_static = grad.leftCols(nc) + delta_backward(g_d, cfg_.delta_window);

  const int bins = cfg_.fft_size / 2 + 1;
  Matrix g_frames(t_count, cfg_.frame_length);
#pragma omp parallel
  {
    Buffers buf(cfg_.fft_size);
#pragma omp for schedule(static)
    for (Eigen::Index t = 0; t < t_count; ++t) {
      Eigen::VectorXd g_energy = dct_.transpose() * g_static.row(t).transpose();
      for (int m = 0; m < cfg_.mel_filters; ++m) {
        const double e = trace.mel_energy(t, m);
        g_energy(m) = e > cfg_.log_floor ? g_energy(m) / e : 0.0;
      }
      const Eigen::VectorXd g_power = mel_.transpose() * g_energy;
      // d|X_k|^2/dy_n = 2 Re(X_k e^{+i 2 pi k n / N}); the c2r transform sums
      // interior bins twice, so DC and Nyquist are doubled to match.
      for (int k = 0; k < bins; ++k) {
        const double scale = (k == 0 || k == bins - 1) ? 2.0 : 1.0;
        buf.spec[k][0] = scale * g_power(k) * trace.spectrum_re(t, k);
        buf.spec[k][1] = scale * g_power(k) * trace.spectrum_im(t, k);
      }
      fftw_execute_dft_c2r(plans_->inverse, buf.spec, buf.real);
      for (int n = 0; n < cfg_.frame_length; ++n) g_frames(t, n) = buf.real[n] * window_[static_cast<std::size_t>(n)];
    }
  }
  // Overlap-add is serial so the summation order is fixed.
  std::vector<double> g_x(trace.signal_length, 0.0);
  for (Eigen::Index t = 0; t < t_count; ++t) {
    double* dst = g_x.data() + t * cfg_.hop;
    for (int n = 0; n < cfg_.frame_length; ++n) dst[n] += g_frames(t, n);
  }
  return g_x;
}

const Frontend& default_frontend() {
  static const Frontend instance{FrontendConfig{}};
  return instance;
}

namespace {
const Frontend& frontend_for(const FrontendConfig& cfg, std::unique_ptr<Frontend>& storage) {
  const FrontendConfig d{};
  const bool is_default = cfg.frame_length == d.frame_length && cfg.hop == d.hop && cfg.fft_size == d.fft_size &&
                          cfg.mel_filters == d.mel_filters && cfg.num_ceps == d.num_ceps &&
                          cfg.log_floor == d.log_floor && cfg.delta_window == d.delta_window &&
                          cfg.sample_rate == d.sample_rate;
  if (is_default) return default_frontend();
  storage = std::make_unique<Frontend>(cfg);
  return *storage;
}
}  // namespace

Matrix mfcc(const Waveform& x, const FrontendConfig& cfg) {
  std::unique_ptr<Frontend> storage;
  return frontend_for(cfg, storage).mfcc(x);
}

FeatureSequence add_deltas(const Matrix& statics, int delta_window, const FrontendConfig& cfg) {
  if (statics.rows() < 1) throw InvalidArgument("add_deltas: need at least one frame");
  if (delta_window < 1) throw InvalidArgument("add_deltas: delta window must be positive");
  const Matrix d = apply_delta(statics, delta_window);
  const Matrix dd = apply_delta(d, delta_window);
  FeatureSequence f;
  f.config = cfg;
  f.frames.resize(statics.rows(), 3 * statics.cols());
  f.frames << statics, d, dd;
  return f;
}

Matrix delta_backward(const Matrix& g, int window) {
  const Eigen::Index t_count = g.rows();
  double denom = 0.0;
  for (int n = 1; n <= window; ++n) denom += 2.0 * n * n;
  Matrix out = Matrix::Zero(t_count, g.cols());
  for (Eigen::Index t = 0; t < t_count; ++t) {
    for (int n = 1; n <= window; ++n) {
      const Eigen::Index ahead = std::min<Eigen::Index>(t + n, t_count - 1);
      const Eigen::Index behind = std::max<Eigen::Index>(t - n, 0);
      out.row(ahead) += (n / denom) * g.row(t);
      out.row(behind) -= (n / denom) * g.row(t);
    }
  }
  return out;
}

FeatureSequence compute_features(const Waveform& x, const FrontendConfig& cfg) {
  std::unique_ptr<Frontend> storage;
  return frontend_for(cfg, storage).features(x);
}

std::vector<double> frontend_backward(const Waveform& x, const Matrix& grad_features, const FrontendConfig& cfg) {
  std::unique_ptr<Frontend> storage;
  const Frontend& fe = frontend_for(cfg, storage);
  FrontendTrace trace;
  fe.mfcc(x, &trace);
  return fe.backward(trace, grad_features);
}

namespace reference {

Matrix mfcc_serial(const Waveform& x, const FrontendConfig& cfg) {
  validate(cfg);
  const std::size_t frames = frame_count(x.size(), cfg);
  if (frames == 0) throw InvalidArgument("mfcc: signal shorter than one frame");
  const std::vector<double> window = hamming(cfg.frame_length);
  const Matrix mel = mel_filterbank(cfg);
  const Matrix dct = dct_ortho(cfg.num_ceps, cfg.mel_filters);
  const int bins = cfg.fft_size / 2 + 1;
  Matrix ceps(static_cast<Eigen::Index>(frames), cfg.num_ceps);
  std::vector<double> frame(static_cast<std::size_t>(cfg.frame_length));
  for (std::size_t t = 0; t < frames; ++t) {
    for (int n = 0; n < cfg.frame_length; ++n) {
      frame[static_cast<std::size_t>(n)] = x.samples[t * static_cast<std::size_t>(cfg.hop) + static_cast<std::size_t>(n)] *
                                           window[static_cast<std::size_t>(n)];
    }
    Eigen::VectorXd power(bins);
    for (int k = 0; k < bins; ++k) {
      double re = 0.0, im = 0.0;
      for (int n = 0; n < cfg.frame_length; ++n) {
        const double angle = -2.0 * std::numbers::pi * static_cast<double>((static_cast<long>(k) * n) % cfg.fft_size) / cfg.fft_size;
        re += frame[static_cast<std::size_t>(n)] * std::cos(angle);
        im += frame[static_cast<std::size_t>(n)] * std::sin(angle);
      }
      power(k) = re * re + im * im;
    }
    Eigen::VectorXd log_energy = mel * power;
    for (Eigen::Index m = 0; m < log_energy.size(); ++m) log_energy(m) = std::log(std::max(log_energy(m), cfg.log_floor));
    ceps.row(static_cast<Eigen::Index>(t)) = (dct * log_energy).transpose();
  }
  return ceps;
}

}  // namespace reference

void write_feature_file(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const std::int64_t header[2] = {m.rows(), m.cols()};
  out.write(reinterpret_cast<const char*>(header), sizeof header);
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!out) throw IoError("failed writing " + path.string());
}

Matrix read_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::int64_t header[2] = {0, 0};
  in.read(reinterpret_cast<char*>(header), sizeof header);
  if (!in || header[0] < 0 || header[1] < 0 || header[1] > (1 << 20)) throw FormatError(path.string() + ": bad matrix header");
  Matrix m(header[0], header[1]);
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!in) throw FormatError(path.string() + ": truncated matrix data");
  return m;
}

}  // namespace sfaguard
