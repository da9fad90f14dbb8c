#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace treesign {

inline constexpr std::uint32_t kDefaultMaxBins = 65535;

// One labeled instance. Feature ids are 1-based (LIBSVM convention) and
// strictly increasing; absent features read as value 0.
struct Instance {
  int label = 0;  // class index in 1..K
  std::vector<std::pair<int, double>> features;

  double value_of(int feature_id) const;
};

struct RawDataset {
  std::vector<Instance> instances;
  int num_features = 0;  // D
  int num_classes = 0;   // K

  std::size_t size() const { return instances.size(); }
};

// Parses LIBSVM text: `label idx:val idx:val ...` per line. Labels may be
// 0- or 1-based; a dataset containing label 0 is shifted to 1-based.
// Throws ParseError naming the offending line.
RawDataset parse_libsvm(std::string_view text);
RawDataset load_libsvm_file(const std::string& path);
void write_libsvm(const RawDataset& data, std::ostream& out);

// Per-feature adaptive quantization table. Bin index of a value is the
// number of cut points <= the value, so indices are contiguous from 0 and
// monotone in the value. Each bin keeps one representative raw value that
// maps back to the bin exactly.
struct FeatureBins {
  std::vector<double> cuts;             // strictly increasing, size = bins-1
  std::vector<double> representatives;  // size = bin count

  bool operator==(const FeatureBins&) const = default;
};

class BinningMap {
 public:
  BinningMap() = default;
  explicit BinningMap(std::vector<FeatureBins> features)
      : features_(std::move(features)) {}

  int num_features() const { return static_cast<int>(features_.size()); }
  std::uint32_t bin_count(int feature) const {
    return static_cast<std::uint32_t>(features_[feature].representatives.size());
  }
  std::uint32_t bin_of(int feature, double value) const;
  double representative(int feature, std::uint32_t bin) const {
    return features_[feature].representatives[bin];
  }
  const FeatureBins& feature(int f) const { return features_[f]; }

  bool operator==(const BinningMap&) const = default;

 private:
  std::vector<FeatureBins> features_;
};

// Dense N x D matrix of bin indices plus labels; keeps the map used to
// produce it so models can bin unseen instances the same way.
struct BinnedDataset {
  std::vector<std::uint32_t> bins;  // row-major
  std::vector<int> labels;          // 1-based
  int num_features = 0;
  int num_classes = 0;
  BinningMap map;

  std::size_t size() const { return labels.size(); }
  std::uint32_t at(std::size_t row, int feature) const {
    return bins[row * static_cast<std::size_t>(num_features) + feature];
  }
};

// Builds per-feature bins over the observed values (including the implicit
// zeros of sparse rows). Features with at most max_bins distinct values get
// one bin per value; otherwise adjacent distinct values are quantile-merged
// into max_bins bins, representative = smallest value in the bin. Cuts sit
// at midpoints between adjacent representatives.
BinningMap build_bins(const RawDataset& data,
                      std::uint32_t max_bins = kDefaultMaxBins);

// Bins every instance; out-of-range values clamp to the first/last bin.
BinnedDataset apply_bins(const RawDataset& data, const BinningMap& map);

}  // namespace treesign
