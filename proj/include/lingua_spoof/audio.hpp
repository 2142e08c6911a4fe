#pragma once

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lingua_spoof/error.hpp"

namespace lingua_spoof {

struct AudioClip {
  std::vector<double> samples;  // amplitudes in [-1, 1]
  int sample_rate = 16000;

  std::size_t length() const { return samples.size(); }
  friend bool operator==(const AudioClip&, const AudioClip&) = default;
};

inline void validate(const AudioClip& clip) {
  if (clip.sample_rate <= 0) fail(ErrorCode::InvalidArgument, "sample_rate must be positive");
  if (clip.samples.empty()) fail(ErrorCode::InvalidArgument, "clip has no samples");
}

inline double duration_seconds(const AudioClip& clip) {
  return static_cast<double>(clip.samples.size()) / clip.sample_rate;
}

// Nearest 16-bit PCM code for an amplitude; the inverse of the /32768 read
// scaling, saturating at the int16 range.
inline std::int16_t to_pcm16(double x) {
  double v = std::nearbyint(x * 32768.0);
  return static_cast<std::int16_t>(std::clamp(v, -32768.0, 32767.0));
}

inline double quantize_pcm16(double x) { return to_pcm16(x) / 32768.0; }

namespace detail {

inline std::uint32_t read_le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put_le32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_le16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

}  // namespace detail

// RIFF/WAVE, PCM 16-bit mono only. Unknown chunks (LIST, fact, ...) are skipped.
inline AudioClip read_wav(std::string_view bytes) {
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 12 || std::memcmp(data, "RIFF", 4) != 0 ||
      std::memcmp(data + 8, "WAVE", 4) != 0) {
    fail(ErrorCode::CorruptHeader, "missing RIFF/WAVE signature");
  }
  bool have_fmt = false;
  int sample_rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    std::uint32_t size = detail::read_le32(data + pos + 4);
    const unsigned char* body = data + pos + 8;
    if (pos + 8 + size > bytes.size()) fail(ErrorCode::CorruptHeader, "chunk overruns file");
    if (std::memcmp(data + pos, "fmt ", 4) == 0) {
      if (size < 16) fail(ErrorCode::CorruptHeader, "fmt chunk too small");
      std::uint16_t format = detail::read_le16(body);
      std::uint16_t channels = detail::read_le16(body + 2);
      std::uint16_t bits = detail::read_le16(body + 14);
      if (format != 1) fail(ErrorCode::UnsupportedFormat, "format tag " + std::to_string(format));
      if (channels != 1) {
        fail(ErrorCode::UnsupportedFormat, std::to_string(channels) + " channels");
      }
      if (bits != 16) fail(ErrorCode::UnsupportedFormat, std::to_string(bits) + "-bit samples");
      sample_rate = static_cast<int>(detail::read_le32(body + 4));
      if (sample_rate <= 0) fail(ErrorCode::CorruptHeader, "zero sample rate");
      have_fmt = true;
    } else if (std::memcmp(data + pos, "data", 4) == 0) {
      if (!have_fmt) fail(ErrorCode::CorruptHeader, "data chunk before fmt chunk");
      AudioClip clip;
      clip.sample_rate = sample_rate;
      clip.samples.resize(size / 2);
      for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        auto raw = static_cast<std::int16_t>(detail::read_le16(body + 2 * i));
        clip.samples[i] = raw / 32768.0;
      }
      return clip;
    }
    pos += 8 + size + (size & 1);
  }
  fail(ErrorCode::CorruptHeader, "no data chunk");
}

inline std::string write_wav(const AudioClip& clip) {
  std::string out;
  auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  out.reserve(44 + data_bytes);
  out += "RIFF";
  detail::put_le32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  detail::put_le32(out, 16);
  detail::put_le16(out, 1);
  detail::put_le16(out, 1);
  detail::put_le32(out, static_cast<std::uint32_t>(clip.sample_rate));
  detail::put_le32(out, static_cast<std::uint32_t>(clip.sample_rate * 2));
  detail::put_le16(out, 2);
  detail::put_le16(out, 16);
  out += "data";
  detail::put_le32(out, data_bytes);
  for (double s : clip.samples) {
    detail::put_le16(out, static_cast<std::uint16_t>(to_pcm16(s)));
  }
  return out;
}

inline std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                          reinterpret_cast<const unsigned char*>(bytes.data()),
                          static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

inline std::string base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) fail(ErrorCode::MalformedResponse, "base64 length not a multiple of 4");
  std::string out(3 * (text.size() / 4), '\0');
  int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                          reinterpret_cast<const unsigned char*>(text.data()),
                          static_cast<int>(text.size()));
  if (n < 0) fail(ErrorCode::MalformedResponse, "invalid base64 payload");
  std::size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

}  // namespace lingua_spoof
