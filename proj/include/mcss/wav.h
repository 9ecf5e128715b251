// mcss/wav.h

#ifndef MCSS_WAV_H_
#define MCSS_WAV_H_

#include <string>

#include "mcss/common.h"

namespace mcss {

// Reads a RIFF WAV file. Accepts 32-bit float (format 3) and 16-bit PCM
// (format 1); samples are returned as doubles in [-1, 1] scale for PCM.
Waveform wav_read(const std::string& path);

// Writes 32-bit float PCM, preserving channel count and sample rate.
void wav_write(const std::string& path, const Waveform& wave);

}  // namespace mcss

#endif  // MCSS_WAV_H_
