#pragma once

#include <string>
#include <vector>

#include "smgaa/audio.hpp"
#include "smgaa/tensor.hpp"

namespace smgaa::data {

// One featurized clip. `features` is [1,F,T].
struct Sample {
  std::string id;
  Tensor features;
  Label label = Label::kBonaFide;
  int condition = 0;
  double duration = 0.0;
};

using Dataset = std::vector<Sample>;

// Stacks the selected samples into a [B,1,F,T] batch. All selected feature
// maps must share one shape.
Tensor stack(const Dataset& ds, const std::vector<std::size_t>& idx);
std::vector<int> labels(const Dataset& ds, const std::vector<std::size_t>& idx);
std::vector<std::size_t> all_indices(const Dataset& ds);

// Samples whose duration and condition match; negative condition keeps all.
Dataset select(const Dataset& ds, double duration, int condition = -1);

}  // namespace smgaa::data
