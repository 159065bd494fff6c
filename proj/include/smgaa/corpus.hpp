#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "smgaa/audio.hpp"
#include "smgaa/dataset.hpp"
#include "smgaa/degrade.hpp"
#include "smgaa/features.hpp"

namespace smgaa::corpus {

// Manifest CSV: clip_id,path,label,duration,condition, plus a trailing kind
// column for feature manifests. Paths are stored relative to the manifest's
// directory and resolved on read.
struct ManifestRow {
  std::string id;
  std::filesystem::path path;
  Label label = Label::kBonaFide;
  double duration = 0.0;
  int condition = 0;
  std::string kind;  // feature kind; empty for audio
};

std::vector<ManifestRow> read_manifest(const std::filesystem::path& manifest);
void write_manifest(const std::filesystem::path& manifest, const std::vector<ManifestRow>& rows);

// Loads the clip behind a row and checks it against the row's metadata.
ClipRecord load_clip(const ManifestRow& row);
// Loads the SMGT tensor behind a feature-manifest row as a [1,F,T] sample.
data::Sample load_sample(const ManifestRow& row);
data::Dataset load_samples(const std::vector<ManifestRow>& rows);

// Every record rendered under each listed condition. Codec and packet-loss
// seed are derived from (seed, clip id), so a clip gets the same codec under
// every condition.
std::vector<ClipRecord> degrade_records(const std::vector<ClipRecord>& records, const std::vector<int>& conditions,
                                        std::uint64_t seed, const degrade::ConditionMap& map = {},
                                        int workers = 0);

// Normalised feature maps, one sample per record, in record order.
data::Dataset featurize_records(const std::vector<ClipRecord>& records, features::FeatureKind kind,
                                int workers = 0);

// One sample per clip id: C0 with probability 1 - degraded_fraction,
// otherwise one of C1..C5, drawn from (seed, id). Falls back to C0 when the
// drawn condition is missing.
data::Dataset training_view(const data::Dataset& ds, double degraded_fraction, std::uint64_t seed);

// File stem used for a clip under a condition, e.g. "spoof_1.0_00003_C2".
std::string file_stem(const std::string& id, int condition);

}  // namespace smgaa::corpus
