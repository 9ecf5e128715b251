// wav.cc

#include "mcss/wav.h"

#include <cstring>
#include <fstream>

namespace mcss {

namespace {

uint32_t read_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t read_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& s, uint32_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u16(std::string& s, uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace

Waveform wav_read(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "cannot open wav file: " + path);
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
  require(buf.size() >= 44, "wav file truncated: " + path);
  require(std::memcmp(buf.data(), "RIFF", 4) == 0 &&
              std::memcmp(buf.data() + 8, "WAVE", 4) == 0,
          "not a RIFF/WAVE file: " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  size_t data_off = 0, data_len = 0;

  size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const char* id = reinterpret_cast<const char*>(buf.data() + pos);
    uint32_t len = read_u32(buf.data() + pos + 4);
    if (std::memcmp(id, "fmt ", 4) == 0 && pos + 8 + 16 <= buf.size()) {
      format = read_u16(buf.data() + pos + 8);
      channels = read_u16(buf.data() + pos + 10);
      rate = read_u32(buf.data() + pos + 12);
      bits = read_u16(buf.data() + pos + 22);
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_off = pos + 8;
      data_len = std::min<size_t>(len, buf.size() - data_off);
    }
    pos += 8 + len + (len & 1);
  }

  require(channels > 0 && rate > 0 && data_off > 0,
          "missing fmt/data chunk: " + path);
  require((format == 3 && bits == 32) || (format == 1 && bits == 16),
          "unsupported wav encoding (need float32 or pcm16): " + path);

  const size_t bytes_per = bits / 8;
  const size_t frames = data_len / (bytes_per * channels);
  Waveform w(channels, frames, static_cast<double>(rate));
  const uint8_t* d = buf.data() + data_off;
  for (size_t n = 0; n < frames; ++n) {
    for (int c = 0; c < channels; ++c) {
      const uint8_t* p = d + (n * channels + c) * bytes_per;
      if (format == 3) {
        float v;
        uint32_t u = read_u32(p);
        std::memcpy(&v, &u, 4);
        w.ch[c][n] = static_cast<double>(v);
      } else {
        int16_t v = static_cast<int16_t>(read_u16(p));
        w.ch[c][n] = static_cast<double>(v) / 32768.0;
      }
    }
  }
  return w;
}

void wav_write(const std::string& path, const Waveform& wave) {
  wave.check();
  const uint16_t channels = static_cast<uint16_t>(wave.channels());
  const uint32_t rate = static_cast<uint32_t>(wave.sample_rate);
  const uint32_t frames = static_cast<uint32_t>(wave.length());
  const uint32_t data_len = frames * channels * 4;

  std::string out;
  out.reserve(44 + data_len);
  out += "RIFF";
  put_u32(out, 36 + data_len);
  out += "WAVE";
  out += "fmt ";
  put_u32(out, 16);
  put_u16(out, 3);  // IEEE float
  put_u16(out, channels);
  put_u32(out, rate);
  put_u32(out, rate * channels * 4);
  put_u16(out, channels * 4);
  put_u16(out, 32);
  out += "data";
  put_u32(out, data_len);
  for (uint32_t n = 0; n < frames; ++n) {
    for (int c = 0; c < channels; ++c) {
      float v = static_cast<float>(wave.ch[c][n]);
      uint32_t u;
      std::memcpy(&u, &v, 4);
      put_u32(out, u);
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), "cannot write wav file: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  require(f.good(), "short write: " + path);
}

}  // namespace mcss
