// Copyright 2026 The dmoe Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dmoe/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "dmoe/error.hpp"

namespace dmoe::signal {
namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

}  // namespace

Waveform read_wav(const std::string& path, int expected_rate, bool resample) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open WAV file '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 12 || std::memcmp(data, "RIFF", 4) != 0 || std::memcmp(data + 8, "WAVE", 4) != 0)
    throw FormatError("'" + path + "' is not a RIFF/WAVE file");

  int channels = 0, bits = 0, format = 0;
  std::uint32_t rate = 0;
  const unsigned char* pcm = nullptr;
  std::size_t pcm_bytes = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t size = read_u32(data + pos + 4);
    const unsigned char* body = data + pos + 8;
    if (pos + 8 + size > bytes.size())
      throw FormatError("'" + path + "': truncated chunk");
    if (std::memcmp(data + pos, "fmt ", 4) == 0) {
      if (size < 16) throw FormatError("'" + path + "': short fmt chunk");
      format = read_u16(body);
      channels = read_u16(body + 2);
      rate = read_u32(body + 4);
      bits = read_u16(body + 14);
    } else if (std::memcmp(data + pos, "data", 4) == 0) {
      pcm = body;
      pcm_bytes = size;
    }
    pos += 8 + size + (size & 1);
  }
  if (pcm == nullptr || rate == 0) throw FormatError("'" + path + "': missing fmt or data chunk");
  if (format != 1 || bits != 16 || channels != 1)
    throw FormatError("'" + path + "': only 16-bit PCM mono is supported");

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples.resize(pcm_bytes / 2);
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    const auto v = static_cast<std::int16_t>(read_u16(pcm + 2 * i));
    w.samples[i] = static_cast<double>(v) / 32768.0;
  }
  if (w.sample_rate != expected_rate) {
    if (!resample)
      throw ConfigError("'" + path + "' has sample rate " + std::to_string(w.sample_rate) +
                        " Hz, expected " + std::to_string(expected_rate) +
                        " (pass --resample to convert)");
    w = resample_linear(w, expected_rate);
  }
  return w;
}

void write_wav(const std::string& path, const Waveform& w) {
  w.validate();
  std::string out;
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  out.append("RIFF");
  put_u32(out, 36 + data_bytes);
  out.append("WAVEfmt ");
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.append("data");
  put_u32(out, data_bytes);
  for (double s : w.samples) {
    const double scaled = std::round(std::clamp(s, -1.0, 1.0) * 32768.0);
    const auto v = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    put_u16(out, static_cast<std::uint16_t>(v));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write '" + path + "'");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

Waveform resample_linear(const Waveform& w, int target_rate) {
  if (target_rate <= 0) throw ConfigError("target sample rate must be positive");
  if (w.sample_rate == target_rate || w.samples.empty()) {
    Waveform copy = w;
    copy.sample_rate = target_rate;
    return copy;
  }
  const double ratio = static_cast<double>(w.sample_rate) / target_rate;
  const auto n = static_cast<std::size_t>(
      std::floor(static_cast<double>(w.samples.size() - 1) / ratio)) + 1;
  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double src = static_cast<double>(i) * ratio;
    const auto j = static_cast<std::size_t>(src);
    const double frac = src - static_cast<double>(j);
    const double a = w.samples[j];
    const double b = j + 1 < w.samples.size() ? w.samples[j + 1] : a;
    out.samples[i] = a + frac * (b - a);
  }
  return out;
}

}  // namespace dmoe::signal
