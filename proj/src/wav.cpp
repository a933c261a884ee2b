// Copyright 2026 CDSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cdse/wav.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "cdse/common.hpp"

namespace cdse {
namespace {

uint32_t ReadU32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t ReadU16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void PutU32(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void PutU16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace

AudioClip ReadWav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  CDSE_CHECK(in.good(), ErrorKind::kIo, "cannot open ", path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const size_t size = bytes.size();
  CDSE_CHECK(size >= 12 && std::memcmp(p, "RIFF", 4) == 0 &&
                 std::memcmp(p + 8, "WAVE", 4) == 0,
             ErrorKind::kParse, path, ": not a RIFF/WAVE file");

  bool have_fmt = false;
  uint16_t format_tag = 0, channels = 0, bits = 0, block_align = 0;
  uint32_t sample_rate = 0;
  const unsigned char* data = nullptr;
  uint32_t data_len = 0;

  size_t off = 12;
  while (off + 8 <= size) {
    const char* id = bytes.data() + off;
    const uint32_t chunk_len = ReadU32(p + off + 4);
    off += 8;
    CDSE_CHECK(off + chunk_len <= size, ErrorKind::kParse, path,
               ": truncated chunk '", std::string(id, 4), "'");
    if (std::memcmp(id, "fmt ", 4) == 0) {
      CDSE_CHECK(chunk_len >= 16, ErrorKind::kParse, path,
                 ": fmt chunk too short (", chunk_len, " bytes)");
      format_tag = ReadU16(p + off);
      channels = ReadU16(p + off + 2);
      sample_rate = ReadU32(p + off + 4);
      block_align = ReadU16(p + off + 12);
      bits = ReadU16(p + off + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = p + off;
      data_len = chunk_len;
    }
    off += chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }

  CDSE_CHECK(have_fmt, ErrorKind::kParse, path, ": missing fmt chunk");
  CDSE_CHECK(data != nullptr, ErrorKind::kParse, path, ": missing data chunk");
  CDSE_CHECK(format_tag == 1, ErrorKind::kFormat, path,
             ": unsupported format_tag=", format_tag, " (PCM=1 required)");
  CDSE_CHECK(channels == 1, ErrorKind::kFormat, path,
             ": unsupported channels=", channels, " (mono required)");
  CDSE_CHECK(bits == 16, ErrorKind::kFormat, path,
             ": unsupported bits_per_sample=", bits, " (16 required)");
  CDSE_CHECK(block_align == 2, ErrorKind::kFormat, path,
             ": unsupported block_align=", block_align);
  CDSE_CHECK(data_len % 2 == 0, ErrorKind::kParse, path,
             ": odd data chunk length ", data_len);

  AudioClip clip;
  clip.sample_rate = static_cast<int>(sample_rate);
  clip.samples.resize(data_len / 2);
  for (size_t i = 0; i < clip.samples.size(); ++i) {
    const int16_t v =
        static_cast<int16_t>(ReadU16(data + 2 * i));
    clip.samples[i] = static_cast<float>(v) / 32768.0f;
  }
  return clip;
}

void WriteWav(const std::string& path, const AudioClip& clip) {
  for (float s : clip.samples) {
    CDSE_CHECK(std::isfinite(s), ErrorKind::kParameter,
               "non-finite sample cannot be written to ", path);
  }
  const uint32_t data_len = static_cast<uint32_t>(clip.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_len);
  out.append("RIFF");
  PutU32(out, 36 + data_len);
  out.append("WAVE");
  out.append("fmt ");
  PutU32(out, 16);
  PutU16(out, 1);  // PCM
  PutU16(out, 1);  // mono
  PutU32(out, static_cast<uint32_t>(clip.sample_rate));
  PutU32(out, static_cast<uint32_t>(clip.sample_rate) * 2);  // byte rate
  PutU16(out, 2);   // block align
  PutU16(out, 16);  // bits per sample
  out.append("data");
  PutU32(out, data_len);
  for (float s : clip.samples) {
    float v = s;
    if (v > 1.0f) v = 1.0f;
    if (v < -1.0f) v = -1.0f;
    const int16_t q = static_cast<int16_t>(std::lrintf(v * 32767.0f));
    PutU16(out, static_cast<uint16_t>(q));
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    CDSE_CHECK(f.good(), ErrorKind::kIo, "cannot open ", tmp, " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    f.flush();
    CDSE_CHECK(f.good(), ErrorKind::kIo, "write failed for ", tmp);
  }
  CDSE_CHECK(std::rename(tmp.c_str(), path.c_str()) == 0, ErrorKind::kIo,
             "cannot move ", tmp, " to ", path);
}

}  // namespace cdse
