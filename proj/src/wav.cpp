/* Copyright 2026 The PatchKWS Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "kws/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "kws/common.hpp"

namespace kws {

namespace {

struct RiffInfo {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits = 0;
  std::streamoff data_offset = 0;
  std::uint32_t data_bytes = 0;
};

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

RiffInfo parse_header(std::ifstream& in, const std::string& path) {
  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0)
    throw DataError(path + ": not a RIFF file");
  read_u32(in);  // riff size
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0)
    throw DataError(path + ": not a WAVE file");

  RiffInfo info;
  bool have_fmt = false;
  while (in.read(tag, 4)) {
    std::uint32_t chunk_size = read_u32(in);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      info.format = read_u16(in);
      info.channels = read_u16(in);
      info.sample_rate = read_u32(in);
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      info.bits = read_u16(in);
      if (chunk_size > 16) in.seekg(chunk_size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      info.data_offset = in.tellg();
      info.data_bytes = chunk_size;
      break;
    } else {
      in.seekg(chunk_size + (chunk_size & 1), std::ios::cur);
    }
  }
  if (!have_fmt || info.data_offset == 0)
    throw DataError(path + ": missing fmt/data chunk");
  if (info.format != 1 || info.bits != 16)
    throw DataError(path + ": expected PCM16");
  if (info.channels != 1) throw DataError(path + ": expected mono audio");
  if (info.sample_rate != kSampleRate)
    throw DataError(path + ": expected 16 kHz, got " +
                    std::to_string(info.sample_rate));
  return info;
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  RiffInfo info = parse_header(in, path);

  std::int64_t n = info.data_bytes / 2;
  std::vector<std::int16_t> raw(static_cast<std::size_t>(n));
  in.seekg(info.data_offset);
  in.read(reinterpret_cast<char*>(raw.data()), n * 2);
  if (!in) throw DataError(path + ": truncated data chunk");

  Waveform w;
  w.samples.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i)
    w.samples[static_cast<std::size_t>(i)] = static_cast<float>(raw[static_cast<std::size_t>(i)]) / 32768.0f;
  return w;
}

std::int64_t wav_sample_count(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  RiffInfo info = parse_header(in, path);
  return info.data_bytes / 2;
}

void write_wav(const std::string& path, const Waveform& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  auto put_u32 = [&](std::uint32_t v) {
    char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8),
                 static_cast<char>(v >> 16), static_cast<char>(v >> 24)};
    out.write(b, 4);
  };
  auto put_u16 = [&](std::uint16_t v) {
    char b[2] = {static_cast<char>(v), static_cast<char>(v >> 8)};
    out.write(b, 2);
  };
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  out.write("RIFF", 4);
  put_u32(36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_u32(16);
  put_u16(1);  // PCM
  put_u16(1);  // mono
  put_u32(static_cast<std::uint32_t>(w.sample_rate));
  put_u32(static_cast<std::uint32_t>(w.sample_rate * 2));
  put_u16(2);
  put_u16(16);
  out.write("data", 4);
  put_u32(data_bytes);
  for (float s : w.samples) {
    float c = std::clamp(s, -1.0f, 1.0f);
    auto v = static_cast<std::int16_t>(std::lrintf(c * 32767.0f));
    put_u16(static_cast<std::uint16_t>(v));
  }
  if (!out) throw DataError("short write to " + path);
}

}  // namespace kws
