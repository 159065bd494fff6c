#include "smgaa/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "smgaa/error.hpp"
#include "smgaa/io.hpp"
#include "smgaa/kernels.hpp"
#include "smgaa/rng.hpp"

namespace smgaa::eval {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_num(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError("eval", "bad " + what + " value '" + s + "'");
  }
}

std::optional<double> parse_cell(const std::string& s, const std::string& what) {
  if (s == "NA") return std::nullopt;
  return parse_num(s, what);
}

template <typename T>
std::string cell(const std::optional<T>& v) {
  if (!v) return "NA";
  if constexpr (std::is_integral_v<T>) return std::to_string(*v);
  else return num(*v);
}

}  // namespace

EerResult compute_eer(const std::vector<double>& scores, const std::vector<Label>& labels) {
  if (scores.size() != labels.size()) throw ConfigError("eval", "scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t nb = 0, ns = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw NumericError("eval", "non-finite score at index " + std::to_string(i));
    (labels[i] == Label::kBonaFide ? nb : ns)++;
  }
  if (nb == 0 || ns == 0) throw ConfigError("eval", "EER needs both bona fide and spoof scores");
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Walk the unique thresholds upward. bona_ge counts bona fide with score >= t,
  // spoof_lt counts spoof with score < t.
  std::size_t bona_ge = nb, spoof_lt = 0;
  double prev_far = 1.0, prev_frr = 0.0, prev_t = scores[order.front()];
  bool have_prev = false;
  std::size_t i = 0;
  while (true) {
    const bool at_inf = i == order.size();
    const double t = at_inf ? std::numeric_limits<double>::infinity() : scores[order[i]];
    const double far = static_cast<double>(bona_ge) / static_cast<double>(nb);
    const double frr = static_cast<double>(spoof_lt) / static_cast<double>(ns);
    // Exact comparison of far - frr against zero via integer cross products.
    const auto lhs = bona_ge * ns, rhs = spoof_lt * nb;
    if (lhs <= rhs) {
      if (lhs == rhs || !have_prev) return {far, t};
      const double d_prev = prev_far - prev_frr, d_cur = far - frr;
      const double alpha = d_prev / (d_prev - d_cur);
      const double eer = prev_far + alpha * (far - prev_far);
      const double thr = at_inf ? prev_t : prev_t + alpha * (t - prev_t);
      return {eer, thr};
    }
    prev_far = far;
    prev_frr = frr;
    prev_t = t;
    have_prev = true;
    // Advance past every score equal to t.
    while (i < order.size() && scores[order[i]] == t) {
      (labels[order[i]] == Label::kBonaFide ? bona_ge-- : spoof_lt++);
      ++i;
    }
  }
}

EerResult compute_eer(const std::vector<ScoredClip>& clips) {
  std::vector<double> s;
  std::vector<Label> l;
  for (const auto& c : clips) {
    s.push_back(c.score);
    l.push_back(c.label);
  }
  return compute_eer(s, l);
}

std::vector<double> score_dataset(model::Model& m, const data::Dataset& ds, std::size_t batch) {
  if (batch == 0) throw ConfigError("eval", "batch must be positive");
  std::vector<double> out;
  out.reserve(ds.size());
  for (std::size_t start = 0; start < ds.size(); start += batch) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(ds.size(), start + batch); ++i) idx.push_back(i);
    auto s = model::spoof_scores(m.forward(data::stack(ds, idx), model::NormMode::kEval));
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

std::vector<ScoredClip> score_clips(model::Model& m, const data::Dataset& ds, std::size_t batch) {
  auto scores = score_dataset(m, ds, batch);
  std::vector<ScoredClip> out;
  out.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i)
    out.push_back({ds[i].id, ds[i].duration, ds[i].condition, ds[i].label, scores[i]});
  return out;
}

double measure_rtf(model::Model& m, double duration_s, std::size_t n_trials, std::size_t warmup) {
  if (n_trials == 0) throw ConfigError("eval", "measure_rtf needs at least one trial");
  if (!(duration_s > 0.0)) throw ConfigError("eval", "duration must be positive");
  Rng rng(0x27f);
  Tensor x({1, 1, m.cfg.in_f, m.cfg.in_t});
  for (double& v : x.data()) v = rng.normal();
  const int saved = kernels::max_threads();
  kernels::set_threads(1);
  std::vector<double> times;
  for (std::size_t i = 0; i < warmup + n_trials; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    m.forward(x, model::NormMode::kEval);
    const auto t1 = std::chrono::steady_clock::now();
    if (i >= warmup) times.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  kernels::set_threads(saved);
  std::sort(times.begin(), times.end());
  const std::size_t n = times.size();
  const double median = n % 2 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
  return median / duration_s;
}

Report build_report(const std::vector<ScoredClip>& clips, const std::vector<double>& durations,
                    const std::vector<std::optional<Complexity>>& complexity) {
  if (!complexity.empty() && complexity.size() != durations.size())
    throw ConfigError("eval", "complexity entries must match durations");
  Report r;
  for (std::size_t d = 0; d < durations.size(); ++d) {
    ReportRow row;
    row.duration = durations[d];
    double sum = 0.0;
    std::size_t present = 0;
    for (int c = 0; c < static_cast<int>(kNumConditions); ++c) {
      std::vector<double> s;
      std::vector<Label> l;
      bool bona = false, spoof = false;
      for (const auto& clip : clips) {
        if (std::abs(clip.duration - durations[d]) > 1e-9 || clip.condition != c) continue;
        s.push_back(clip.score);
        l.push_back(clip.label);
        (clip.label == Label::kBonaFide ? bona : spoof) = true;
      }
      if (!bona || !spoof) continue;
      row.eer[c] = compute_eer(s, l).eer;
      sum += *row.eer[c];
      ++present;
    }
    if (present) row.avg = sum / static_cast<double>(present);
    if (!complexity.empty() && complexity[d]) {
      row.rtf = complexity[d]->rtf;
      row.params = complexity[d]->params;
      row.gflops = complexity[d]->gflops;
    }
    r.rows.push_back(row);
  }
  return r;
}

std::string report_csv(const Report& r) {
  io::CsvTable t;
  t.header = {"duration"};
  for (int c = 0; c < static_cast<int>(kNumConditions); ++c) t.header.push_back(condition_name(c));
  for (const char* h : {"Avg", "RTF", "params", "GFLOPs"}) t.header.push_back(h);
  for (const auto& row : r.rows) {
    std::vector<std::string> cells{duration_name(row.duration)};
    for (const auto& e : row.eer) cells.push_back(cell(e));
    cells.push_back(cell(row.avg));
    cells.push_back(cell(row.rtf));
    cells.push_back(cell(row.params));
    cells.push_back(cell(row.gflops));
    t.rows.push_back(std::move(cells));
  }
  return io::format_csv(t);
}

Report parse_report_csv(const std::string& text) {
  const auto t = io::parse_csv(text, "report");
  Report r;
  for (const auto& cells : t.rows) {
    ReportRow row;
    row.duration = parse_duration(cells[t.column("duration")]);
    for (int c = 0; c < static_cast<int>(kNumConditions); ++c)
      row.eer[c] = parse_cell(cells[t.column(condition_name(c))], "EER");
    row.avg = parse_cell(cells[t.column("Avg")], "Avg");
    row.rtf = parse_cell(cells[t.column("RTF")], "RTF");
    if (auto p = parse_cell(cells[t.column("params")], "params")) row.params = static_cast<std::size_t>(*p);
    row.gflops = parse_cell(cells[t.column("GFLOPs")], "GFLOPs");
    r.rows.push_back(row);
  }
  return r;
}

void write_report(const std::filesystem::path& path, const Report& r) {
  const std::string text = report_csv(r);
  io::write_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

void write_scores(const std::filesystem::path& path, const std::vector<ScoredClip>& clips) {
  io::CsvTable t;
  t.header = {"clip_id", "duration", "condition", "label", "score"};
  for (const auto& c : clips)
    t.rows.push_back({c.id, duration_name(c.duration), condition_name(c.condition), label_name(c.label), num(c.score)});
  io::write_csv(path, t);
}

std::vector<ScoredClip> read_scores(const std::filesystem::path& path) {
  const auto t = io::read_csv(path);
  std::vector<ScoredClip> out;
  for (const auto& cells : t.rows)
    out.push_back({cells[t.column("clip_id")], parse_duration(cells[t.column("duration")]),
                   parse_condition(cells[t.column("condition")]), parse_label(cells[t.column("label")]),
                   parse_num(cells[t.column("score")], "score")});
  return out;
}

}  // namespace smgaa::eval
