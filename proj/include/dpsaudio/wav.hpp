// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dpsaudio/signal.hpp"

namespace dpsaudio {

enum class WavEncoding { pcm16, float32 };

struct WavWriteReport {
  // Number of samples hard-limited to [-1, 1] (pcm16 only).
  std::size_t limited_samples = 0;
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(const std::vector<char>& buf, std::size_t off) {
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  return v;
}

template <typename T>
void write_le(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

inline std::string describe_format(std::uint16_t tag, std::uint16_t bits) {
  std::string name;
  switch (tag) {
    case kFormatPcm: name = "integer PCM"; break;
    case kFormatFloat: name = "IEEE float"; break;
    case 2: name = "MS ADPCM"; break;
    case 6: name = "A-law"; break;
    case 7: name = "mu-law"; break;
    default: name = "format tag " + std::to_string(tag); break;
  }
  return name + " " + std::to_string(bits) + "-bit";
}

}  // namespace detail

// Reads a RIFF/WAVE file (16-bit PCM or 32-bit float, any channel count) and
// averages channels to mono.
inline Signal load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_wav: cannot open " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw IoError("load_wav: " + path.string() + " is not a RIFF/WAVE file");
  }

  std::uint16_t tag = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t data_off = 0, data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::uint32_t chunk_len = detail::read_le<std::uint32_t>(buf, pos + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(buf.data() + pos, "fmt ", 4) == 0) {
      if (chunk_len < 16 || body + 16 > buf.size()) throw IoError("load_wav: truncated fmt chunk");
      tag = detail::read_le<std::uint16_t>(buf, body);
      channels = detail::read_le<std::uint16_t>(buf, body + 2);
      rate = detail::read_le<std::uint32_t>(buf, body + 4);
      bits = detail::read_le<std::uint16_t>(buf, body + 14);
      if (tag == detail::kFormatExtensible && chunk_len >= 40 && body + 26 <= buf.size()) {
        // First two bytes of the sub-format GUID carry the actual format tag.
        tag = detail::read_le<std::uint16_t>(buf, body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(buf.data() + pos, "data", 4) == 0) {
      data_off = body;
      data_len = std::min<std::size_t>(chunk_len, buf.size() - body);
    }
    pos = body + chunk_len + (chunk_len & 1u);
  }
  if (!have_fmt) throw IoError("load_wav: " + path.string() + " has no fmt chunk");
  if (data_off == 0) throw IoError("load_wav: " + path.string() + " has no data chunk");
  if (channels == 0 || rate == 0) throw IoError("load_wav: invalid channel count or sample rate");

  const bool pcm16 = tag == detail::kFormatPcm && bits == 16;
  const bool f32 = tag == detail::kFormatFloat && bits == 32;
  if (!pcm16 && !f32) {
    throw IoError("load_wav: unsupported encoding " + detail::describe_format(tag, bits) +
                  " (supported: integer PCM 16-bit, IEEE float 32-bit)");
  }

  const std::size_t width = bits / 8;
  const std::size_t frames = data_len / (width * channels);
  if (frames == 0) throw IoError("load_wav: " + path.string() + " contains no samples");
  std::vector<double> mono(frames, 0.0);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t off = data_off + (f * channels + c) * width;
      if (pcm16) {
        acc += static_cast<double>(detail::read_le<std::int16_t>(buf, off)) / 32768.0;
      } else {
        acc += static_cast<double>(detail::read_le<float>(buf, off));
      }
    }
    mono[f] = acc / static_cast<double>(channels);
  }
  return Signal(std::move(mono), static_cast<int>(rate));
}

inline WavWriteReport save_wav(const Signal& signal, const std::filesystem::path& path, WavEncoding encoding) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("save_wav: cannot open " + path.string() + " for writing");

  const bool pcm16 = encoding == WavEncoding::pcm16;
  const std::uint16_t bits = pcm16 ? 16 : 32;
  const std::uint16_t block_align = bits / 8;
  const auto data_len = static_cast<std::uint32_t>(signal.size() * block_align);

  out.write("RIFF", 4);
  detail::write_le<std::uint32_t>(out, 36 + data_len);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  detail::write_le<std::uint32_t>(out, 16);
  detail::write_le<std::uint16_t>(out, pcm16 ? detail::kFormatPcm : detail::kFormatFloat);
  detail::write_le<std::uint16_t>(out, 1);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(signal.sample_rate()));
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(signal.sample_rate()) * block_align);
  detail::write_le<std::uint16_t>(out, block_align);
  detail::write_le<std::uint16_t>(out, bits);
  out.write("data", 4);
  detail::write_le<std::uint32_t>(out, data_len);

  WavWriteReport report;
  for (double v : signal.vec()) {
    if (pcm16) {
      if (v > 1.0 || v < -1.0) ++report.limited_samples;
      const double limited = std::clamp(v, -1.0, 1.0);
      const long q = std::lround(limited * 32768.0);
      detail::write_le<std::int16_t>(out, static_cast<std::int16_t>(std::clamp(q, -32768L, 32767L)));
    } else {
      detail::write_le<float>(out, static_cast<float>(v));
    }
  }
  if (!out) throw IoError("save_wav: write failed for " + path.string());
  return report;
}

}  // namespace dpsaudio
