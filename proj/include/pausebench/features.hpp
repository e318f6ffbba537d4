// SPDX-License-Identifier: Apache-2.0
/**
 * @file   features.hpp
 * @brief  Audio normalization, log mel filterbank / MFCC extraction on the
 *         50 Hz frame grid, embedding resampling, and feature fusion.
 *
 * Framing: 25 ms Hamming window, 20 ms hop, 512-point FFT, 40 triangular
 * mel filters spanning 0-8 kHz (HTK mel scale), log floor 1e-10, no
 * pre-emphasis. Feature rows beyond the last full analysis window repeat
 * the last computed row so that a clip of d seconds yields round(50 d) rows.
 */
#pragma once

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fftw3.h>

#include "core.hpp"
#include "wav.hpp"

namespace pausebench {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr int kAudioRateHz = 16000;
inline constexpr int kAcousticDims = 40;
inline constexpr int kEmbeddingDims = 768;
inline constexpr int kFusedDims = kAcousticDims + kEmbeddingDims;

struct FrameConfig {
  int window = 400; ///< 25 ms at 16 kHz
  int hop = 320;    ///< 20 ms at 16 kHz, i.e. 50 Hz
  int fft_size = 512;
  int num_mel = kAcousticDims;
  double fmin_hz = 0.0;
  double fmax_hz = 8000.0;
  double log_floor = 1e-10;
};

struct AudioClip {
  std::vector<double> samples;
  int rate_hz = kAudioRateHz;

  double duration_s() const {
    return static_cast<double>(samples.size()) / rate_hz;
  }
};

enum class FeatureKind { MFB, MFCC, EMB4, EMB6, EMB12, FUSED };

inline std::string_view to_string(FeatureKind k) {
  switch (k) {
  case FeatureKind::MFB:
    return "mfb";
  case FeatureKind::MFCC:
    return "mfcc";
  case FeatureKind::EMB4:
    return "emb4";
  case FeatureKind::EMB6:
    return "emb6";
  case FeatureKind::EMB12:
    return "emb12";
  case FeatureKind::FUSED:
    return "fused";
  }
  return "?";
}

inline FeatureKind feature_kind_from_string(std::string_view s) {
  for (auto k : {FeatureKind::MFB, FeatureKind::MFCC, FeatureKind::EMB4,
                 FeatureKind::EMB6, FeatureKind::EMB12, FeatureKind::FUSED})
    if (to_string(k) == s)
      return k;
  throw std::invalid_argument("unknown feature kind: " + std::string(s));
}

inline bool is_embedding(FeatureKind k) {
  return k == FeatureKind::EMB4 || k == FeatureKind::EMB6 ||
         k == FeatureKind::EMB12;
}

inline bool is_acoustic(FeatureKind k) {
  return k == FeatureKind::MFB || k == FeatureKind::MFCC;
}

inline int expected_dims(FeatureKind k) {
  if (is_acoustic(k))
    return kAcousticDims;
  if (is_embedding(k))
    return kEmbeddingDims;
  return kFusedDims;
}

/// T x F frame-aligned matrix whose width is fixed by its kind.
class FeatureMatrix {
public:
  FeatureMatrix(Matrix data, FeatureKind kind, int rate_hz = kFrameRateHz)
      : data_(std::move(data)), kind_(kind), rate_hz_(rate_hz) {
    if (data_.cols() != expected_dims(kind_))
      throw std::invalid_argument(
          "feature kind " + std::string(to_string(kind_)) + " expects " +
          std::to_string(expected_dims(kind_)) + " columns, got " +
          std::to_string(data_.cols()));
    if (data_.rows() < 1)
      throw std::invalid_argument("feature matrix has no rows");
    if (!data_.allFinite())
      throw std::invalid_argument("feature matrix has non-finite entries");
  }

  const Matrix &data() const { return data_; }
  FeatureKind kind() const { return kind_; }
  int rate_hz() const { return rate_hz_; }
  int frames() const { return static_cast<int>(data_.rows()); }
  int dims() const { return static_cast<int>(data_.cols()); }

private:
  Matrix data_;
  FeatureKind kind_;
  int rate_hz_;
};

// ---------------------------------------------------------------------------
// FFT plumbing (FFTW). Planning is serialized; execution on private buffers
// is reentrant.

namespace detail {

inline std::mutex &fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

/// Magnitude-squared or complex spectrum of a real sequence of fixed size.
class RealFft {
public:
  explicit RealFft(int n) : n_(n) {
    in_ = fftw_alloc_real(static_cast<std::size_t>(n));
    out_ = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    std::lock_guard lock(fftw_planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard lock(fftw_planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft &) = delete;
  RealFft &operator=(const RealFft &) = delete;

  int size() const { return n_; }
  int bins() const { return n_ / 2 + 1; }

  std::vector<std::complex<double>> transform(const double *x, int count) {
    for (int i = 0; i < n_; ++i)
      in_[i] = i < count ? x[i] : 0.0;
    fftw_execute(plan_);
    std::vector<std::complex<double>> out(static_cast<std::size_t>(bins()));
    for (int k = 0; k < bins(); ++k)
      out[static_cast<std::size_t>(k)] = {out_[k][0], out_[k][1]};
    return out;
  }

private:
  int n_;
  double *in_ = nullptr;
  fftw_complex *out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

} // namespace detail

// ---------------------------------------------------------------------------

struct NormalizedAudio {
  AudioClip clip;
  bool degenerate = false; ///< input had zero variance; output is mean-removed only
};

/// Zero-mean, unit population variance scaling of the time-domain signal.
inline NormalizedAudio normalize_audio(const AudioClip &clip) {
  if (clip.samples.empty())
    throw std::invalid_argument("cannot normalize an empty clip");
  const double n = static_cast<double>(clip.samples.size());
  double mean = 0.0;
  for (double x : clip.samples)
    mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : clip.samples)
    var += (x - mean) * (x - mean);
  var /= n;

  NormalizedAudio out;
  out.clip.rate_hz = clip.rate_hz;
  out.clip.samples.resize(clip.samples.size());
  out.degenerate = !(var > 1e-20);
  const double scale = out.degenerate ? 1.0 : 1.0 / std::sqrt(var);
  for (std::size_t i = 0; i < clip.samples.size(); ++i)
    out.clip.samples[i] = (clip.samples[i] - mean) * scale;
  return out;
}

/// Loads a WAV file and converts it to 16 kHz mono.
inline AudioClip load_audio(const std::filesystem::path &p) {
  PcmAudio pcm = read_wav(p);
  AudioClip clip;
  clip.rate_hz = kAudioRateHz;
  if (pcm.rate_hz == kAudioRateHz) {
    clip.samples = std::move(pcm.samples);
  } else {
    PolyphaseResampler rs(pcm.rate_hz, kAudioRateHz);
    clip.samples = rs.process(pcm.samples);
  }
  return clip;
}

inline double hz_to_mel(double hz) {
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}
inline double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

/// num_mel x (fft_size/2+1) triangular filter weights.
inline Matrix mel_filterbank(const FrameConfig &cfg, int rate_hz) {
  const int bins = cfg.fft_size / 2 + 1;
  const double lo = hz_to_mel(cfg.fmin_hz), hi = hz_to_mel(cfg.fmax_hz);
  std::vector<double> edges(static_cast<std::size_t>(cfg.num_mel + 2));
  for (int i = 0; i < cfg.num_mel + 2; ++i)
    edges[static_cast<std::size_t>(i)] =
        mel_to_hz(lo + (hi - lo) * i / (cfg.num_mel + 1));
  Matrix fb = Matrix::Zero(cfg.num_mel, bins);
  for (int m = 0; m < cfg.num_mel; ++m) {
    const double left = edges[static_cast<std::size_t>(m)];
    const double center = edges[static_cast<std::size_t>(m + 1)];
    const double right = edges[static_cast<std::size_t>(m + 2)];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * rate_hz / cfg.fft_size;
      if (f > left && f < center)
        fb(m, k) = (f - left) / (center - left);
      else if (f >= center && f < right)
        fb(m, k) = (right - f) / (right - center);
    }
  }
  return fb;
}

inline int target_frames(double duration_s) {
  return static_cast<int>(std::lround(duration_s * kFrameRateHz));
}

/// Log mel energies, round(duration * 50) x 40.
inline FeatureMatrix compute_mfb(const AudioClip &clip,
                                 const FrameConfig &cfg = {}) {
  if (clip.rate_hz != kAudioRateHz)
    throw std::invalid_argument("compute_mfb expects 16 kHz audio");
  const int n = static_cast<int>(clip.samples.size());
  if (n < cfg.window)
    throw std::invalid_argument("clip shorter than one analysis window (" +
                                std::to_string(n) + " < " +
                                std::to_string(cfg.window) + " samples)");
  const int computed = (n - cfg.window) / cfg.hop + 1;
  const int rows = std::max(1, target_frames(clip.duration_s()));

  std::vector<double> window(static_cast<std::size_t>(cfg.window));
  for (int i = 0; i < cfg.window; ++i)
    window[static_cast<std::size_t>(i)] =
        0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (cfg.window - 1));
  const Matrix fb = mel_filterbank(cfg, clip.rate_hz);

  detail::RealFft fft(cfg.fft_size);
  std::vector<double> frame(static_cast<std::size_t>(cfg.window));
  Vector power(fft.bins());
  Matrix out(rows, cfg.num_mel);
  const int usable = std::min(computed, rows);
  for (int t = 0; t < usable; ++t) {
    const double *src = clip.samples.data() + static_cast<std::ptrdiff_t>(t) * cfg.hop;
    for (int i = 0; i < cfg.window; ++i)
      frame[static_cast<std::size_t>(i)] = src[i] * window[static_cast<std::size_t>(i)];
    const auto spec = fft.transform(frame.data(), cfg.window);
    for (int k = 0; k < fft.bins(); ++k)
      power(k) = std::norm(spec[static_cast<std::size_t>(k)]);
    const Vector energies = fb * power;
    for (int m = 0; m < cfg.num_mel; ++m)
      out(t, m) = std::log(std::max(energies(m), cfg.log_floor));
  }
  for (int t = usable; t < rows; ++t)
    out.row(t) = out.row(usable - 1);
  return FeatureMatrix(std::move(out), FeatureKind::MFB);
}

/// Orthonormal type-II DCT of a vector.
inline Vector dct2(const Vector &x) {
  const auto n = x.size();
  Vector out(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      acc += x(i) * std::cos(std::numbers::pi * k * (2.0 * i + 1.0) / (2.0 * n));
    out(k) = acc * std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n));
  }
  return out;
}

/// Row-wise orthonormal DCT-II of the log mel matrix, all 40 coefficients.
inline FeatureMatrix mfcc_from_mfb(const FeatureMatrix &mfb) {
  if (mfb.kind() != FeatureKind::MFB)
    throw std::invalid_argument("mfcc_from_mfb expects an MFB matrix");
  const Matrix &m = mfb.data();
  const auto n = m.cols();
  Matrix basis(n, n);
  for (Eigen::Index k = 0; k < n; ++k)
    for (Eigen::Index i = 0; i < n; ++i)
      basis(k, i) = std::cos(std::numbers::pi * k * (2.0 * i + 1.0) / (2.0 * n)) *
                    std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n));
  Matrix out = m * basis.transpose();
  return FeatureMatrix(std::move(out), FeatureKind::MFCC);
}

inline FeatureMatrix compute_mfcc(const AudioClip &clip,
                                  const FrameConfig &cfg = {}) {
  return mfcc_from_mfb(compute_mfb(clip, cfg));
}

/// Mean-variance normalization followed by MFB or MFCC extraction.
inline FeatureMatrix extract_acoustic(const AudioClip &raw, FeatureKind kind,
                                      const FrameConfig &cfg = {}) {
  if (!is_acoustic(kind))
    throw std::invalid_argument("extract_acoustic: kind must be mfb or mfcc");
  const AudioClip clip = normalize_audio(raw).clip;
  return kind == FeatureKind::MFB ? compute_mfb(clip, cfg) : compute_mfcc(clip, cfg);
}

/// Linear interpolation along time to target_frames rows.
inline FeatureMatrix resample_embedding(const FeatureMatrix &emb,
                                        int target_frames) {
  if (!is_embedding(emb.kind()))
    throw std::invalid_argument("resample_embedding expects an embedding");
  if (emb.frames() < 2)
    throw std::invalid_argument("embedding needs at least 2 rows");
  if (target_frames < 2)
    throw std::invalid_argument("target frame count must be >= 2");
  const Matrix &src = emb.data();
  const int n = emb.frames();
  if (n == target_frames)
    return emb;
  Matrix out(target_frames, src.cols());
  const double step = static_cast<double>(n - 1) / (target_frames - 1);
  for (int t = 0; t < target_frames; ++t) {
    if (t == target_frames - 1) {
      out.row(t) = src.row(n - 1);
      continue;
    }
    const double pos = t * step;
    const int i = std::min(static_cast<int>(pos), n - 2);
    const double w = pos - i;
    out.row(t) = (1.0 - w) * src.row(i) + w * src.row(i + 1);
  }
  return FeatureMatrix(std::move(out), emb.kind(), emb.rate_hz());
}

/// [A;E]: acoustic columns 0-39 followed by embedding columns 40-807.
inline FeatureMatrix fuse(const FeatureMatrix &acoustic,
                          const FeatureMatrix &emb) {
  if (!is_acoustic(acoustic.kind()))
    throw std::invalid_argument("fuse: first operand must be MFB or MFCC");
  if (!is_embedding(emb.kind()))
    throw std::invalid_argument("fuse: second operand must be an embedding");
  if (acoustic.frames() != emb.frames())
    throw std::invalid_argument(
        "fuse: frame count mismatch (acoustic " +
        std::to_string(acoustic.frames()) + " vs embedding " +
        std::to_string(emb.frames()) + ")");
  Matrix out(acoustic.frames(), kFusedDims);
  out.leftCols(kAcousticDims) = acoustic.data();
  out.rightCols(kEmbeddingDims) = emb.data();
  return FeatureMatrix(std::move(out), FeatureKind::FUSED, acoustic.rate_hz());
}

// ---------------------------------------------------------------------------
// Matrix files: little-endian float32 row-major blob plus a JSON sidecar
// {"frames","dims","rate_hz","kind"} at <path>.json.

inline std::filesystem::path sidecar_path(const std::filesystem::path &p) {
  return std::filesystem::path(p.string() + ".json");
}

inline void write_raw_matrix(const std::filesystem::path &p, const Matrix &m,
                             const std::string &kind, int rate_hz) {
  if (p.has_parent_path())
    std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot write " + p.string());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const float v = static_cast<float>(m(r, c));
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      const char b[4] = {static_cast<char>(bits & 0xff),
                         static_cast<char>((bits >> 8) & 0xff),
                         static_cast<char>((bits >> 16) & 0xff),
                         static_cast<char>((bits >> 24) & 0xff)};
      out.write(b, 4);
    }
  write_json_file(sidecar_path(p), json{{"frames", m.rows()},
                                        {"dims", m.cols()},
                                        {"rate_hz", rate_hz},
                                        {"kind", kind}});
}

struct RawMatrix {
  Matrix data;
  std::string kind;
  int rate_hz = kFrameRateHz;
};

inline RawMatrix read_raw_matrix(const std::filesystem::path &p) {
  const json side = read_json_file(sidecar_path(p));
  const auto rows = side.at("frames").get<Eigen::Index>();
  const auto cols = side.at("dims").get<Eigen::Index>();
  const std::string bytes = read_file_bytes(p);
  if (static_cast<Eigen::Index>(bytes.size()) != rows * cols * 4)
    throw std::runtime_error(p.string() + ": size does not match sidecar");
  RawMatrix out;
  out.kind = side.at("kind").get<std::string>();
  out.rate_hz = side.value("rate_hz", kFrameRateHz);
  out.data.resize(rows, cols);
  const auto *b = reinterpret_cast<const unsigned char *>(bytes.data());
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      const std::size_t o = static_cast<std::size_t>((r * cols + c) * 4);
      const std::uint32_t bits = std::uint32_t(b[o]) | std::uint32_t(b[o + 1]) << 8 |
                                 std::uint32_t(b[o + 2]) << 16 |
                                 std::uint32_t(b[o + 3]) << 24;
      float v;
      std::memcpy(&v, &bits, 4);
      out.data(r, c) = v;
    }
  return out;
}

inline void write_matrix(const std::filesystem::path &p, const FeatureMatrix &m) {
  write_raw_matrix(p, m.data(), std::string(to_string(m.kind())), m.rate_hz());
}

inline FeatureMatrix read_matrix(const std::filesystem::path &p) {
  RawMatrix raw = read_raw_matrix(p);
  return FeatureMatrix(std::move(raw.data), feature_kind_from_string(raw.kind),
                       raw.rate_hz);
}

} // namespace pausebench
