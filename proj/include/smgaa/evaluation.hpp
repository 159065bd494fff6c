#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "smgaa/audio.hpp"
#include "smgaa/dataset.hpp"
#include "smgaa/model.hpp"

namespace smgaa::eval {

// Higher score means more likely spoof.
struct ScoredClip {
  std::string id;
  double duration = 0.0;
  int condition = 0;
  Label label = Label::kBonaFide;
  double score = 0.0;
};

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

// FAR(t) = share of bona fide clips scoring >= t, FRR(t) = share of spoof
// clips scoring < t. Candidate thresholds are the sorted unique scores plus
// +inf. The EER is read at the first candidate where FAR <= FRR, linearly
// interpolated from the previous candidate when the two do not meet exactly.
EerResult compute_eer(const std::vector<double>& scores, const std::vector<Label>& labels);
EerResult compute_eer(const std::vector<ScoredClip>& clips);

// Spoof scores for every sample, eval-mode forward in batches.
std::vector<double> score_dataset(model::Model& m, const data::Dataset& ds, std::size_t batch = 64);
std::vector<ScoredClip> score_clips(model::Model& m, const data::Dataset& ds, std::size_t batch = 64);

// Median single-clip forward time divided by `duration_s`, measured on one
// thread after `warmup` discarded runs.
double measure_rtf(model::Model& m, double duration_s, std::size_t n_trials, std::size_t warmup = 3);

struct Complexity {
  double rtf = 0.0;
  std::size_t params = 0;
  double gflops = 0.0;
};

struct ReportRow {
  double duration = 0.0;
  std::array<std::optional<double>, kNumConditions> eer{};
  // Mean of the present condition cells.
  std::optional<double> avg;
  std::optional<double> rtf;
  std::optional<std::size_t> params;
  std::optional<double> gflops;

  bool operator==(const ReportRow&) const = default;
};

struct Report {
  std::vector<ReportRow> rows;
  bool operator==(const Report&) const = default;
};

// Groups clips by (duration, condition). Cells without both labels are left
// absent. `complexity` is indexed like `durations`, or empty.
Report build_report(const std::vector<ScoredClip>& clips, const std::vector<double>& durations,
                    const std::vector<std::optional<Complexity>>& complexity = {});

// duration,C0..C5,Avg,RTF,params,GFLOPs with "NA" for absent cells.
std::string report_csv(const Report& r);
Report parse_report_csv(const std::string& text);
void write_report(const std::filesystem::path& path, const Report& r);

// clip_id,duration,condition,label,score
void write_scores(const std::filesystem::path& path, const std::vector<ScoredClip>& clips);
std::vector<ScoredClip> read_scores(const std::filesystem::path& path);

}  // namespace smgaa::eval
