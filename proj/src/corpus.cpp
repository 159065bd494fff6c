#include "smgaa/corpus.hpp"

#include <omp.h>

#include <algorithm>
#include <map>
#include <set>

#include "smgaa/error.hpp"
#include "smgaa/io.hpp"
#include "smgaa/rng.hpp"

namespace smgaa::corpus {

namespace {

int resolve_workers(int workers) { return workers > 0 ? workers : omp_get_max_threads(); }

}  // namespace

std::vector<ManifestRow> read_manifest(const std::filesystem::path& manifest) {
  const auto t = io::read_csv(manifest);
  const auto base = manifest.parent_path();
  const std::size_t ci = t.column("clip_id"), cp = t.column("path"), cl = t.column("label"),
                    cd = t.column("duration"), cc = t.column("condition");
  const auto kind_it = std::find(t.header.begin(), t.header.end(), "kind");
  std::vector<ManifestRow> rows;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& cells = t.rows[r];
    try {
      rows.push_back({cells[ci], base / cells[cp], parse_label(cells[cl]), parse_duration(cells[cd]),
                      parse_condition(cells[cc]),
                      kind_it == t.header.end() ? "" : cells[static_cast<std::size_t>(kind_it - t.header.begin())]});
      if (!rows.back().kind.empty()) features::parse_kind(rows.back().kind);
    } catch (const Error& e) {
      throw IoError("corpus", manifest.string() + " row " + std::to_string(r + 1) + ": " + e.what());
    }
  }
  return rows;
}

void write_manifest(const std::filesystem::path& manifest, const std::vector<ManifestRow>& rows) {
  const bool with_kind = std::any_of(rows.begin(), rows.end(), [](const ManifestRow& r) { return !r.kind.empty(); });
  io::CsvTable t;
  t.header = {"clip_id", "path", "label", "duration", "condition"};
  if (with_kind) t.header.push_back("kind");
  const auto base = manifest.parent_path();
  for (const auto& r : rows) {
    t.rows.push_back({r.id, std::filesystem::relative(r.path, base.empty() ? "." : base).generic_string(),
                      label_name(r.label), duration_name(r.duration), condition_name(r.condition)});
    if (with_kind) t.rows.back().push_back(r.kind);
  }
  io::write_csv(manifest, t);
}

ClipRecord load_clip(const ManifestRow& row) {
  const auto wav = io::read_wav(row.path, kSampleRate);
  if (wav.samples.size() != samples_for(row.duration))
    throw IoError("corpus", row.path.string() + ": " + std::to_string(wav.samples.size()) + " samples, expected " +
                                std::to_string(samples_for(row.duration)) + " for " + duration_name(row.duration) +
                                " s");
  AudioClip clip;
  clip.samples = wav.samples;
  clip.duration_s = row.duration;
  clip.label = row.label;
  clip.condition = row.condition;
  return {row.id, std::move(clip)};
}

data::Sample load_sample(const ManifestRow& row) {
  Tensor t = io::load_tensor(row.path);
  const std::size_t frames = features::expected_frames(row.duration);
  if (t.rank() != 3 || t.dim(0) != 1 || t.dim(1) != features::kCeps || t.dim(2) != frames)
    throw IoError("corpus", row.path.string() + ": tensor " + shape_str(t.shape()) + ", expected [1," +
                                std::to_string(features::kCeps) + "," + std::to_string(frames) + "]");
  return {row.id, std::move(t), row.label, row.condition, row.duration};
}

data::Dataset load_samples(const std::vector<ManifestRow>& rows) {
  data::Dataset out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(load_sample(r));
  return out;
}

std::vector<ClipRecord> degrade_records(const std::vector<ClipRecord>& records, const std::vector<int>& conditions,
                                        std::uint64_t seed, const degrade::ConditionMap& map, int workers) {
  std::vector<ClipRecord> out(records.size() * conditions.size());
  const auto n = static_cast<std::ptrdiff_t>(out.size());
#pragma omp parallel for schedule(dynamic) num_threads(resolve_workers(workers))
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& src = records[static_cast<std::size_t>(i) / conditions.size()];
    const int cond = conditions[static_cast<std::size_t>(i) % conditions.size()];
    const std::uint64_t h = fnv1a(src.id);
    const int codec = cond == 0 ? 0 : degrade::choose_codec(seed, h);
    const auto spec = degrade::make_spec(cond, codec, mix_seed(seed, h), map);
    out[static_cast<std::size_t>(i)] = {src.id, degrade::condition_pipeline(src.clip, spec)};
  }
  return out;
}

data::Dataset featurize_records(const std::vector<ClipRecord>& records, features::FeatureKind kind, int workers) {
  data::Dataset out(records.size());
  const auto n = static_cast<std::ptrdiff_t>(records.size());
#pragma omp parallel for schedule(dynamic) num_threads(resolve_workers(workers))
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& r = records[static_cast<std::size_t>(i)];
    auto fm = features::featurize(r.clip, kind);
    const Shape& s = fm.tensor.shape();
    out[static_cast<std::size_t>(i)] = {r.id, fm.tensor.reshaped({1, s[2], s[3]}), r.clip.label, r.clip.condition,
                                        r.clip.duration_s};
  }
  return out;
}

data::Dataset training_view(const data::Dataset& ds, double degraded_fraction, std::uint64_t seed) {
  if (!(degraded_fraction >= 0.0 && degraded_fraction <= 1.0))
    throw ConfigError("corpus", "degraded_fraction must be in [0,1]");
  std::map<std::pair<std::string, int>, std::size_t> where;
  std::vector<std::string> ids;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    where.emplace(std::pair{ds[i].id, ds[i].condition}, i);
    if (seen.insert(ds[i].id).second) ids.push_back(ds[i].id);
  }
  data::Dataset out;
  for (const auto& id : ids) {
    Rng rng(mix_seed(seed, fnv1a(id) ^ 0x7a11));
    int cond = 0;
    if (rng.bernoulli(degraded_fraction)) cond = 1 + static_cast<int>(rng.below(kNumConditions - 1));
    auto it = where.find({id, cond});
    // Fall back to the lowest condition present for this id.
    if (it == where.end()) it = where.lower_bound({id, 0});
    out.push_back(ds[it->second]);
  }
  return out;
}

std::string file_stem(const std::string& id, int condition) { return id + "_" + condition_name(condition); }

}  // namespace smgaa::corpus
