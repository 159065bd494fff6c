#include "smgaa/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "smgaa/error.hpp"

namespace smgaa::data {

Tensor stack(const Dataset& ds, const std::vector<std::size_t>& idx) {
  if (idx.empty()) throw ConfigError("data", "cannot stack an empty batch");
  const Shape& s = ds.at(idx.front()).features.shape();
  if (s.size() != 3) throw ConfigError("data", "sample features must be [1,F,T]");
  const std::size_t per = s[0] * s[1] * s[2];
  Tensor out({idx.size(), s[0], s[1], s[2]});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const Sample& smp = ds.at(idx[i]);
    if (smp.features.shape() != s)
      throw ConfigError("data", "sample " + smp.id + " has a different feature shape than " + ds[idx.front()].id);
    std::copy(smp.features.data().begin(), smp.features.data().end(), out.data().begin() + i * per);
  }
  return out;
}

std::vector<int> labels(const Dataset& ds, const std::vector<std::size_t>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(static_cast<int>(ds.at(i).label));
  return out;
}

std::vector<std::size_t> all_indices(const Dataset& ds) {
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

Dataset select(const Dataset& ds, double duration, int condition) {
  Dataset out;
  for (const auto& s : ds)
    if (std::abs(s.duration - duration) < 1e-9 && (condition < 0 || s.condition == condition)) out.push_back(s);
  return out;
}

}  // namespace smgaa::data
