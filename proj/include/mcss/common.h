// mcss/common.h

#ifndef MCSS_COMMON_H_
#define MCSS_COMMON_H_

#include <complex>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcss {

using cplx = std::complex<double>;

constexpr double kSpeedOfSound = 343.0;  // m/s

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

// Multichannel time-domain signal. All channels have equal length.
struct Waveform {
  std::vector<std::vector<double>> ch;  // [channel][sample]
  double sample_rate = 0.0;

  Waveform() = default;
  Waveform(int channels, size_t length, double fs)
      : ch(channels, std::vector<double>(length, 0.0)), sample_rate(fs) {}

  int channels() const { return static_cast<int>(ch.size()); }
  size_t length() const { return ch.empty() ? 0 : ch[0].size(); }

  void check() const {
    require(!ch.empty(), "waveform has no channels");
    for (const auto& c : ch)
      require(c.size() == ch[0].size(), "waveform channels differ in length");
  }
};

inline double energy(const std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

inline double energy(const Waveform& w) {
  double e = 0.0;
  for (const auto& c : w.ch) e += energy(c);
  return e;
}

inline double db10(double ratio) { return 10.0 * std::log10(ratio); }
inline double db_to_lin10(double db) { return std::pow(10.0, db / 10.0); }
inline double db_to_lin20(double db) { return std::pow(10.0, db / 20.0); }

}  // namespace mcss

#endif  // MCSS_COMMON_H_
