#include "smgaa/audio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "smgaa/error.hpp"

namespace smgaa {

std::string label_name(Label l) { return l == Label::kBonaFide ? "bonafide" : "spoof"; }

Label parse_label(const std::string& s) {
  if (s == "bonafide" || s == "bona_fide" || s == "0") return Label::kBonaFide;
  if (s == "spoof" || s == "1") return Label::kSpoof;
  throw ConfigError("audio", "unknown label '" + s + "'");
}

std::string condition_name(int c) {
  if (c < 0 || c >= static_cast<int>(kNumConditions))
    throw ConfigError("audio", "condition index " + std::to_string(c) + " outside C0..C5");
  return "C" + std::to_string(c);
}

int parse_condition(const std::string& s) {
  if (s.size() == 2 && std::toupper(static_cast<unsigned char>(s[0])) == 'C' && s[1] >= '0' && s[1] <= '5')
    return s[1] - '0';
  throw ConfigError("audio", "unknown condition '" + s + "' (expected C0..C5)");
}

std::size_t duration_index(double d) {
  for (std::size_t i = 0; i < kDurations.size(); ++i)
    if (std::abs(kDurations[i] - d) < 1e-9) return i;
  throw ConfigError("audio", "unsupported duration " + std::to_string(d) + " s");
}

std::string duration_name(double d) {
  static const char* names[] = {"0.5", "1.0", "1.5", "2.0"};
  return names[duration_index(d)];
}

double parse_duration(const std::string& s) {
  double d = 0.0;
  try {
    std::size_t used = 0;
    d = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
  } catch (const std::exception&) {
    throw ConfigError("audio", "cannot parse duration '" + s + "'");
  }
  return kDurations[duration_index(d)];
}

std::size_t samples_for(double duration_s) {
  return static_cast<std::size_t>(std::llround(duration_s * kSampleRate));
}

void AudioClip::validate() const {
  if (sample_rate != kSampleRate)
    throw ConfigError("audio", "sample rate " + std::to_string(sample_rate) + " Hz, expected 16000");
  duration_index(duration_s);
  if (samples.size() != samples_for(duration_s))
    throw ConfigError("audio", std::to_string(samples.size()) + " samples do not match duration " +
                                   duration_name(duration_s) + " s");
  condition_name(condition);
  const bool in_range = std::all_of(samples.begin(), samples.end(),
                                    [](double v) { return std::isfinite(v) && v >= -1.0 && v <= 1.0; });
  if (!in_range) throw ConfigError("audio", "samples must be finite and within [-1, 1]");
}

}  // namespace smgaa
