#include "treesign/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "treesign/detail/rng.hpp"

namespace treesign {

RawDataset sample_clustered(const ClusterSpec& spec, int n,
                            std::uint64_t sample_seed) {
  if (spec.num_classes < 2 || spec.num_features < 1 ||
      spec.prototypes_per_class < 1 || n < 0) {
    throw std::invalid_argument("invalid cluster spec");
  }

  detail::SplitMix64 proto_rng(spec.seed);
  std::vector<std::vector<double>> prototypes;
  prototypes.reserve(static_cast<std::size_t>(spec.num_classes) *
                     spec.prototypes_per_class);
  for (int k = 0; k < spec.num_classes; ++k) {
    for (int p = 0; p < spec.prototypes_per_class; ++p) {
      std::vector<double> proto(spec.num_features);
      for (double& v : proto) v = proto_rng.next_real() * spec.feature_max;
      prototypes.push_back(std::move(proto));
    }
  }

  detail::SplitMix64 rng(sample_seed);
  RawDataset data;
  data.num_features = spec.num_features;
  data.num_classes = spec.num_classes;
  data.instances.reserve(n);
  for (int i = 0; i < n; ++i) {
    const int label = i % spec.num_classes + 1;  // balanced classes
    const int proto_idx =
        (label - 1) * spec.prototypes_per_class +
        static_cast<int>(rng.next_below(spec.prototypes_per_class));
    const std::vector<double>& proto = prototypes[proto_idx];

    Instance inst;
    inst.label = label;
    for (int d = 0; d < spec.num_features; ++d) {
      double v = proto[d] + spec.noise_sigma * rng.next_gaussian();
      v = std::clamp(std::round(v), 0.0, spec.feature_max);
      if (v != 0.0) inst.features.emplace_back(d + 1, v);  // sparse zeros
    }
    data.instances.push_back(std::move(inst));
  }
  return data;
}

}  // namespace treesign
