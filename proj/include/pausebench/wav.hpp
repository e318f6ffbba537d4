// SPDX-License-Identifier: Apache-2.0
/**
 * @file   wav.hpp
 * @brief  16-bit PCM WAV reading/writing and a windowed-sinc polyphase
 *         sample-rate converter.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace pausebench {

struct PcmAudio {
  std::vector<double> samples; ///< mono, scaled to [-1, 1)
  int rate_hz = 16000;
};

namespace detail {

inline std::uint32_t read_u32(const std::uint8_t *p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 |
         std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

inline std::uint16_t read_u16(const std::uint8_t *p) {
  return std::uint16_t(p[0] | p[1] << 8);
}

inline void put_u32(std::string &s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u16(std::string &s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

} // namespace detail

/// Parses a RIFF/WAVE byte buffer. Multi-channel input is averaged to mono.
inline PcmAudio decode_wav(const std::string &bytes) {
  const auto *data = reinterpret_cast<const std::uint8_t *>(bytes.data());
  const std::size_t n = bytes.size();
  if (n < 12 || std::memcmp(data, "RIFF", 4) != 0 ||
      std::memcmp(data + 8, "WAVE", 4) != 0)
    throw std::runtime_error("not a RIFF/WAVE file");

  int channels = 0, bits = 0, rate = 0, format = 0;
  const std::uint8_t *pcm = nullptr;
  std::size_t pcm_bytes = 0;
  std::size_t pos = 12;
  while (pos + 8 <= n) {
    const std::uint32_t len = detail::read_u32(data + pos + 4);
    const std::uint8_t *body = data + pos + 8;
    if (pos + 8 + len > n)
      throw std::runtime_error("truncated WAV chunk");
    if (std::memcmp(data + pos, "fmt ", 4) == 0 && len >= 16) {
      format = detail::read_u16(body);
      channels = detail::read_u16(body + 2);
      rate = static_cast<int>(detail::read_u32(body + 4));
      bits = detail::read_u16(body + 14);
    } else if (std::memcmp(data + pos, "data", 4) == 0) {
      pcm = body;
      pcm_bytes = len;
    }
    pos += 8 + len + (len & 1);
  }
  if (format != 1 || bits != 16)
    throw std::runtime_error("only 16-bit PCM WAV is supported");
  if (channels < 1 || rate <= 0 || pcm == nullptr)
    throw std::runtime_error("malformed WAV header");

  PcmAudio out;
  out.rate_hz = rate;
  const std::size_t frames = pcm_bytes / (2u * channels);
  out.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      const auto v = static_cast<std::int16_t>(
          detail::read_u16(pcm + 2 * (i * channels + c)));
      acc += v / 32768.0;
    }
    out.samples[i] = acc / channels;
  }
  return out;
}

inline std::string encode_wav(const PcmAudio &audio) {
  std::string s;
  const auto data_bytes = static_cast<std::uint32_t>(audio.samples.size() * 2);
  s.reserve(44 + data_bytes);
  s += "RIFF";
  detail::put_u32(s, 36 + data_bytes);
  s += "WAVEfmt ";
  detail::put_u32(s, 16);
  detail::put_u16(s, 1);
  detail::put_u16(s, 1);
  detail::put_u32(s, static_cast<std::uint32_t>(audio.rate_hz));
  detail::put_u32(s, static_cast<std::uint32_t>(audio.rate_hz * 2));
  detail::put_u16(s, 2);
  detail::put_u16(s, 16);
  s += "data";
  detail::put_u32(s, data_bytes);
  for (double x : audio.samples) {
    const double c = std::clamp(x, -1.0, 32767.0 / 32768.0);
    detail::put_u16(s, static_cast<std::uint16_t>(
                           static_cast<std::int16_t>(std::lround(c * 32768.0))));
  }
  return s;
}

inline std::string read_file_bytes(const std::filesystem::path &p) {
  std::ifstream in(p, std::ios::binary);
  if (!in)
    throw std::runtime_error("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline PcmAudio read_wav(const std::filesystem::path &p) {
  return decode_wav(read_file_bytes(p));
}

inline void write_wav(const std::filesystem::path &p, const PcmAudio &audio) {
  if (p.has_parent_path())
    std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  const std::string bytes = encode_wav(audio);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw std::runtime_error("cannot write " + p.string());
}

/**
 * Rational-ratio resampler. The prototype low-pass is a Kaiser-windowed sinc
 * designed at the upsampled rate with its cutoff at the lower of the two
 * Nyquist frequencies; output sample m is the dot product of the input with
 * the filter phase selected by m * down mod up.
 */
class PolyphaseResampler {
public:
  PolyphaseResampler(int in_rate, int out_rate, int zero_crossings = 16,
                     double kaiser_beta = 8.6)
      : in_rate_(in_rate), out_rate_(out_rate) {
    if (in_rate <= 0 || out_rate <= 0)
      throw std::invalid_argument("sample rates must be positive");
    const int g = std::gcd(in_rate, out_rate);
    up_ = out_rate / g;
    down_ = in_rate / g;
    const int span = std::max(up_, down_);
    half_ = static_cast<long>(zero_crossings) * span;
    const double fc = 0.5 / span * 0.97;
    const double denom = std::cyl_bessel_i(0.0, kaiser_beta);
    taps_.resize(static_cast<std::size_t>(2 * half_ + 1));
    for (long i = -half_; i <= half_; ++i) {
      const double x = 2.0 * fc * static_cast<double>(i);
      const double sinc =
          i == 0 ? 1.0
                 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
      const double r = static_cast<double>(i) / static_cast<double>(half_);
      const double win =
          std::cyl_bessel_i(0.0, kaiser_beta * std::sqrt(1.0 - r * r)) / denom;
      taps_[static_cast<std::size_t>(i + half_)] = up_ * 2.0 * fc * sinc * win;
    }
  }

  std::vector<double> process(const std::vector<double> &in) const {
    if (up_ == down_)
      return in;
    const long n_in = static_cast<long>(in.size());
    const long n_out = (n_in * up_ + down_ - 1) / down_;
    std::vector<double> out(static_cast<std::size_t>(n_out), 0.0);
    const long len = static_cast<long>(taps_.size());
    for (long m = 0; m < n_out; ++m) {
      const long u = m * down_;
      // taps index = u - n*up + half_, must lie in [0, len)
      long n_lo = (u + half_ - (len - 1) + up_ - 1);
      n_lo = n_lo >= 0 ? n_lo / up_ : -((-n_lo) / up_);
      const long n_hi = (u + half_) / up_;
      double acc = 0.0;
      for (long n = std::max(0L, n_lo); n <= std::min(n_in - 1, n_hi); ++n) {
        const long k = u - n * up_ + half_;
        if (k >= 0 && k < len)
          acc += in[static_cast<std::size_t>(n)] *
                 taps_[static_cast<std::size_t>(k)];
      }
      out[static_cast<std::size_t>(m)] = acc;
    }
    return out;
  }

  int up() const { return up_; }
  int down() const { return down_; }

private:
  int in_rate_;
  int out_rate_;
  int up_ = 1;
  int down_ = 1;
  long half_ = 0;
  std::vector<double> taps_;
};

} // namespace pausebench
