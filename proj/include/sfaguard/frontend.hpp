#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sfaguard/corpus.hpp"

namespace sfaguard {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct FrontendConfig {
  int frame_length = 400;  // 25 ms
  int hop = 160;           // 10 ms
  int fft_size = 512;
  int mel_filters = 26;
  int num_ceps = 13;
  double log_floor = 1e-10;
  int delta_window = 2;
  int sample_rate = kSampleRate;

  int feature_dim() const { return 3 * num_ceps; }
};

inline constexpr int kFeatureDim = 39;

/// Rows are frames; columns are [static | delta | delta-delta].
struct FeatureSequence {
  Matrix frames;
  FrontendConfig config;
};

/// 1 + floor((n - frame_length) / hop), or 0 when n < frame_length.
std::size_t frame_count(std::size_t n, const FrontendConfig& cfg);

/// Per-frame energy in dB (unwindowed sum of squares), one value per frame.
std::vector<double> frame_energy_db(const Waveform& x, const FrontendConfig& cfg = {});

/// Intermediate values of a forward pass needed by the backward pass.
struct FrontendTrace {
  std::size_t signal_length = 0;
  Matrix spectrum_re;  // frames x (fft_size/2 + 1)
  Matrix spectrum_im;
  Matrix mel_energy;   // frames x mel_filters, before flooring
};

/// MFCC + deltas with an exact vector-Jacobian product. The filterbank,
/// window, DCT and FFT plans are built once per instance. Forward and
/// backward passes are parallel across frames and safe to call concurrently.
class Frontend {
 public:
  explicit Frontend(FrontendConfig cfg = {});
  ~Frontend();
  Frontend(const Frontend&) = delete;
  Frontend& operator=(const Frontend&) = delete;

  const FrontendConfig& config() const { return cfg_; }

  /// frames x num_ceps static cepstra.
  Matrix mfcc(const Waveform& x, FrontendTrace* trace = nullptr) const;
  FeatureSequence features(const Waveform& x, FrontendTrace* trace = nullptr) const;

  /// d(loss)/dx given d(loss)/d(features) for the signal recorded in trace.
  std::vector<double> backward(const FrontendTrace& trace, const Matrix& grad_features) const;

  const Matrix& mel_weights() const { return mel_; }     // mel_filters x bins
  const Matrix& dct_matrix() const { return dct_; }      // num_ceps x mel_filters
  const std::vector<double>& window() const { return window_; }

 private:
  struct Plans;
  FrontendConfig cfg_;
  std::vector<double> window_;
  Matrix mel_;
  Matrix dct_;
  std::unique_ptr<Plans> plans_;
};

/// Shared instance for the default configuration.
const Frontend& default_frontend();

Matrix mfcc(const Waveform& x, const FrontendConfig& cfg = {});

/// Regression deltas over +-delta_window frames with edge replication;
/// delta-deltas apply the same operator to the deltas.
FeatureSequence add_deltas(const Matrix& statics, int delta_window = 2, const FrontendConfig& cfg = {});

/// Transpose of the delta operator, for gradients.
Matrix delta_backward(const Matrix& grad_delta, int delta_window);

FeatureSequence compute_features(const Waveform& x, const FrontendConfig& cfg = {});

std::vector<double> frontend_backward(const Waveform& x, const Matrix& grad_features,
                                      const FrontendConfig& cfg = {});

namespace reference {
/// Serial MFCC with a direct O(N^2) DFT per frame.
Matrix mfcc_serial(const Waveform& x, const FrontendConfig& cfg = {});
}  // namespace reference

/// Binary matrix file: int64 rows, int64 cols, then row-major float64.
void write_feature_file(const std::filesystem::path& path, const Matrix& m);
Matrix read_feature_file(const std::filesystem::path& path);

}  // namespace sfaguard
