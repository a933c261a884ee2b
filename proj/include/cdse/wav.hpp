// Copyright 2026 CDSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef CDSE_WAV_HPP_
#define CDSE_WAV_HPP_

#include <string>
#include <vector>

namespace cdse {

// Mono PCM audio in [-1, 1].
struct AudioClip {
  std::vector<float> samples;
  int sample_rate = 16000;
};

// Reads a RIFF/WAVE file: PCM format tag, mono, 16-bit only. Unknown chunks
// are skipped; offending fields are named in the error message.
AudioClip ReadWav(const std::string& path);

// Writes the canonical 44-byte-header mono 16-bit PCM file. Samples are
// clamped to [-1, 1] and rounded to the nearest int16.
void WriteWav(const std::string& path, const AudioClip& clip);

}  // namespace cdse

#endif  // CDSE_WAV_HPP_
