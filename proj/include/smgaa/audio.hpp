#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace smgaa {

inline constexpr int kSampleRate = 16000;
inline constexpr std::array<double, 4> kDurations{0.5, 1.0, 1.5, 2.0};
inline constexpr std::size_t kNumConditions = 6;

enum class Label { kBonaFide = 0, kSpoof = 1 };

std::string label_name(Label l);
Label parse_label(const std::string& s);

// "C0".."C5" <-> 0..5. Parsing is case-insensitive.
std::string condition_name(int c);
int parse_condition(const std::string& s);

// Canonical text form of a duration ("0.5", "1.0", "1.5", "2.0"); throws for
// anything outside the four supported durations.
std::string duration_name(double d);
double parse_duration(const std::string& s);
std::size_t duration_index(double d);

struct AudioClip {
  std::vector<double> samples;
  int sample_rate = kSampleRate;
  double duration_s = 0.0;
  Label label = Label::kBonaFide;
  int condition = 0;

  // Throws ConfigError when the sample count, rate, range or tags disagree.
  void validate() const;
};

std::size_t samples_for(double duration_s);

// A clip with its corpus identifier.
struct ClipRecord {
  std::string id;
  AudioClip clip;
};

}  // namespace smgaa
