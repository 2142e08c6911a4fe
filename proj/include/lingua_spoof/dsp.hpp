#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <vector>

#include "lingua_spoof/audio.hpp"
#include "lingua_spoof/error.hpp"

namespace lingua_spoof {

struct MelParams {
  std::size_t n_fft = 1024;
  std::size_t hop = 256;
  std::size_t n_mels = 80;
  double fmin = 0.0;
  double fmax = 0.0;  // 0 means sample_rate / 2
  double log_floor = 1e-10;

  friend bool operator==(const MelParams&, const MelParams&) = default;
};

// Row-major [n_frames x n_mels] log10 mel amplitudes.
struct MelSpectrogram {
  std::size_t n_frames = 0;
  std::size_t n_mels = 0;
  std::vector<double> values;
  MelParams params;

  std::span<const double> frame(std::size_t i) const {
    return std::span<const double>(values).subspan(i * n_mels, n_mels);
  }
  double at(std::size_t frame_index, std::size_t band) const {
    return values[frame_index * n_mels + band];
  }
};

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 Cooley-Tukey.
inline void fft(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  if (!is_power_of_two(n)) fail(ErrorCode::InvalidArgument, "fft size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> step(std::cos(angle), std::sin(angle));
    for (std::size_t start = 0; start < n; start += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        auto u = a[start + k];
        auto v = a[start + k + len / 2] * w;
        a[start + k] = u + v;
        a[start + k + len / 2] = u - v;
        w *= step;
      }
    }
  }
}

// Periodic Hann, the usual STFT analysis window.
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n));
  }
  return w;
}

// Slaney mel scale: linear below 1 kHz, logarithmic above.
inline double hz_to_mel(double hz) {
  constexpr double kLinearStep = 200.0 / 3.0;
  constexpr double kBreakHz = 1000.0;
  const double break_mel = kBreakHz / kLinearStep;
  const double log_step = std::log(6.4) / 27.0;
  if (hz < kBreakHz) return hz / kLinearStep;
  return break_mel + std::log(hz / kBreakHz) / log_step;
}

inline double mel_to_hz(double mel) {
  constexpr double kLinearStep = 200.0 / 3.0;
  constexpr double kBreakHz = 1000.0;
  const double break_mel = kBreakHz / kLinearStep;
  const double log_step = std::log(6.4) / 27.0;
  if (mel < break_mel) return mel * kLinearStep;
  return kBreakHz * std::exp(log_step * (mel - break_mel));
}

// [n_mels x (n_fft/2 + 1)] triangular filters with Slaney area normalisation.
inline std::vector<std::vector<double>> mel_filterbank(int sample_rate, const MelParams& p) {
  const double fmax = p.fmax > 0.0 ? p.fmax : sample_rate / 2.0;
  const std::size_t n_bins = p.n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(p.fmin);
  const double mel_hi = hz_to_mel(fmax);
  std::vector<double> edges(p.n_mels + 2);
  for (std::size_t m = 0; m < edges.size(); ++m) {
    edges[m] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(m) /
                                      static_cast<double>(p.n_mels + 1));
  }
  std::vector<std::vector<double>> bank(p.n_mels, std::vector<double>(n_bins, 0.0));
  for (std::size_t m = 0; m < p.n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    const double norm = 2.0 / (hi - lo);
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(p.n_fft);
      const double rise = (f - lo) / (mid - lo);
      const double fall = (hi - f) / (hi - mid);
      bank[m][k] = norm * std::max(0.0, std::min(rise, fall));
    }
  }
  return bank;
}

inline std::size_t frame_count(std::size_t length, const MelParams& p) {
  if (length < p.n_fft) return 0;
  return (length - p.n_fft) / p.hop + 1;
}

inline MelSpectrogram mel_spectrogram(const AudioClip& clip, const MelParams& p = {}) {
  validate(clip);
  if (!is_power_of_two(p.n_fft)) fail(ErrorCode::InvalidArgument, "n_fft must be a power of two");
  if (p.hop == 0 || p.hop > p.n_fft) fail(ErrorCode::InvalidArgument, "hop must be in [1, n_fft]");
  if (p.n_mels == 0) fail(ErrorCode::InvalidArgument, "n_mels must be positive");
  if (clip.samples.size() < p.n_fft) {
    fail(ErrorCode::ClipTooShort, std::to_string(clip.samples.size()) + " samples < n_fft " +
                                      std::to_string(p.n_fft));
  }
  const auto window = hann_window(p.n_fft);
  const auto bank = mel_filterbank(clip.sample_rate, p);
  const std::size_t n_bins = p.n_fft / 2 + 1;

  MelSpectrogram out;
  out.params = p;
  out.n_mels = p.n_mels;
  out.n_frames = frame_count(clip.samples.size(), p);
  out.values.resize(out.n_frames * out.n_mels);

  std::vector<std::complex<double>> buf(p.n_fft);
  std::vector<double> magnitude(n_bins);
  for (std::size_t f = 0; f < out.n_frames; ++f) {
    const std::size_t start = f * p.hop;
    for (std::size_t i = 0; i < p.n_fft; ++i) buf[i] = clip.samples[start + i] * window[i];
    fft(buf);
    for (std::size_t k = 0; k < n_bins; ++k) magnitude[k] = std::abs(buf[k]);
    for (std::size_t m = 0; m < p.n_mels; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < n_bins; ++k) e += bank[m][k] * magnitude[k];
      out.values[f * out.n_mels + m] = std::log10(std::max(e, p.log_floor));
    }
  }
  return out;
}

inline double euclidean(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// Unnormalised DTW total path cost, steps (1,0), (0,1), (1,1).
inline double dtw_distance(const MelSpectrogram& a, const MelSpectrogram& b) {
  if (a.n_mels != b.n_mels) {
    fail(ErrorCode::DimensionMismatch,
         std::to_string(a.n_mels) + " vs " + std::to_string(b.n_mels) + " mel bands");
  }
  if (a.n_frames == 0 || b.n_frames == 0) fail(ErrorCode::InvalidArgument, "empty spectrogram");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(b.n_frames + 1, inf), cur(b.n_frames + 1, inf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= a.n_frames; ++i) {
    cur[0] = inf;
    for (std::size_t j = 1; j <= b.n_frames; ++j) {
      const double cost = euclidean(a.frame(i - 1), b.frame(j - 1));
      cur[j] = cost + std::min({prev[j], cur[j - 1], prev[j - 1]});
    }
    std::swap(prev, cur);
  }
  return prev[b.n_frames];
}

inline void write_csv(const MelSpectrogram& mel, std::ostream& os) {
  os << "frame";
  for (std::size_t m = 0; m < mel.n_mels; ++m) os << ",mel" << m;
  os << '\n';
  for (std::size_t f = 0; f < mel.n_frames; ++f) {
    os << f;
    for (std::size_t m = 0; m < mel.n_mels; ++m) os << ',' << mel.at(f, m);
    os << '\n';
  }
}

}  // namespace lingua_spoof
