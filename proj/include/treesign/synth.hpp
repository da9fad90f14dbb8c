#pragma once

#include <cstdint>

#include "treesign/dataset.hpp"

namespace treesign {

// Deterministic clustered classification data for demos and self-contained
// tests: each class owns a few prototype points in [0, feature_max]^D and
// instances are noisy integer-rounded copies of them.
struct ClusterSpec {
  int num_classes = 10;
  int num_features = 16;
  int prototypes_per_class = 6;
  double noise_sigma = 10.0;
  double feature_max = 100.0;
  std::uint64_t seed = 1;  // fixes the prototypes
};

// Draws n instances; sample_seed varies the draw (train/test splits) while
// the prototypes stay those of spec.seed.
RawDataset sample_clustered(const ClusterSpec& spec, int n,
                            std::uint64_t sample_seed);

}  // namespace treesign
