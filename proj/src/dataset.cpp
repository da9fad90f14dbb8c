#include "treesign/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "treesign/errors.hpp"

namespace treesign {

namespace {

bool parse_double(std::string_view token, double& out) {
  const char* first = token.data();
  const char* last = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

std::string shortest(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

double Instance::value_of(int feature_id) const {
  auto it = std::lower_bound(
      features.begin(), features.end(), feature_id,
      [](const auto& pair, int id) { return pair.first < id; });
  if (it != features.end() && it->first == feature_id) return it->second;
  return 0.0;
}

RawDataset parse_libsvm(std::string_view text) {
  RawDataset data;
  bool saw_label_zero = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;

  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    std::string_view line = text.substr(
        pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    // tokenize on blanks
    std::vector<std::string_view> tokens;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
      std::size_t start = i;
      while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
      if (i > start) tokens.push_back(line.substr(start, i - start));
    }
    if (tokens.empty()) continue;

    auto fail = [&](const std::string& what) -> void {
      throw ParseError("parse error at line " + std::to_string(line_no) +
                       ": " + what);
    };

    double label_value = 0.0;
    if (!parse_double(tokens[0], label_value) ||
        label_value != std::floor(label_value)) {
      fail("label '" + std::string(tokens[0]) + "' is not an integer");
    }
    const int label = static_cast<int>(label_value);
    if (label < 0) fail("negative label " + std::to_string(label));
    if (label == 0) saw_label_zero = true;

    Instance inst;
    inst.label = label;
    int prev_id = 0;
    for (std::size_t t = 1; t < tokens.size(); ++t) {
      const std::string_view tok = tokens[t];
      const std::size_t colon = tok.find(':');
      if (colon == std::string_view::npos) {
        fail("expected idx:val pair, got '" + std::string(tok) + "'");
      }
      int id = 0;
      {
        const char* first = tok.data();
        const char* last = tok.data() + colon;
        auto [ptr, ec] = std::from_chars(first, last, id);
        if (ec != std::errc{} || ptr != last) {
          fail("feature index '" + std::string(tok.substr(0, colon)) +
               "' is not an integer");
        }
      }
      if (id < 1) fail("feature index " + std::to_string(id) + " < 1");
      if (id <= prev_id) {
        fail("feature indices not increasing (" + std::to_string(prev_id) +
             " then " + std::to_string(id) + ")");
      }
      double value = 0.0;
      if (!parse_double(tok.substr(colon + 1), value)) {
        fail("feature value '" + std::string(tok.substr(colon + 1)) +
             "' is not a number");
      }
      inst.features.emplace_back(id, value);
      prev_id = id;
      data.num_features = std::max(data.num_features, id);
    }
    data.instances.push_back(std::move(inst));
  }

  if (saw_label_zero) {
    for (auto& inst : data.instances) ++inst.label;
  }
  for (const auto& inst : data.instances) {
    data.num_classes = std::max(data.num_classes, inst.label);
  }
  return data;
}

RawDataset load_libsvm_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open dataset file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_libsvm(buf.str());
}

void write_libsvm(const RawDataset& data, std::ostream& out) {
  for (const auto& inst : data.instances) {
    out << inst.label;
    for (const auto& [id, value] : inst.features) {
      out << ' ' << id << ':' << shortest(value);
    }
    out << '\n';
  }
}

std::uint32_t BinningMap::bin_of(int feature, double value) const {
  const auto& cuts = features_[feature].cuts;
  // number of cuts <= value; clamps below the first and above the last cut
  auto it = std::upper_bound(cuts.begin(), cuts.end(), value);
  return static_cast<std::uint32_t>(it - cuts.begin());
}

BinningMap build_bins(const RawDataset& data, std::uint32_t max_bins) {
  if (max_bins == 0) throw std::invalid_argument("max_bins must be positive");
  if (data.instances.empty()) {
    throw std::invalid_argument("cannot build bins over an empty dataset");
  }

  const int D = data.num_features;
  std::vector<FeatureBins> features(D);
  std::vector<std::vector<double>> observed(D);
  std::vector<std::size_t> explicit_count(D, 0);

  for (const auto& inst : data.instances) {
    for (const auto& [id, value] : inst.features) {
      observed[id - 1].push_back(value);
      ++explicit_count[id - 1];
    }
  }

  for (int d = 0; d < D; ++d) {
    auto& values = observed[d];
    if (explicit_count[d] < data.instances.size()) {
      values.push_back(0.0);  // sparse rows read this feature as 0
    }
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());

    const std::size_t distinct = values.size();
    const std::size_t bins =
        std::min<std::size_t>(distinct, max_bins);
    auto& fb = features[d];
    fb.representatives.reserve(bins);
    for (std::size_t b = 0; b < bins; ++b) {
      // even partition of the distinct-value sequence; representative is
      // the smallest value of each chunk (identity when bins == distinct)
      fb.representatives.push_back(values[b * distinct / bins]);
    }
    fb.cuts.reserve(bins > 0 ? bins - 1 : 0);
    for (std::size_t b = 0; b + 1 < bins; ++b) {
      double cut = (fb.representatives[b] + fb.representatives[b + 1]) / 2.0;
      if (cut <= fb.representatives[b]) cut = fb.representatives[b + 1];
      fb.cuts.push_back(cut);
    }
  }
  return BinningMap(std::move(features));
}

BinnedDataset apply_bins(const RawDataset& data, const BinningMap& map) {
  if (map.num_features() != data.num_features) {
    throw std::invalid_argument(
        "binning map feature count does not match dataset");
  }
  BinnedDataset out;
  out.num_features = data.num_features;
  out.num_classes = data.num_classes;
  out.map = map;
  const std::size_t N = data.instances.size();
  const int D = data.num_features;
  out.bins.resize(N * static_cast<std::size_t>(D));
  out.labels.resize(N);

  for (std::size_t i = 0; i < N; ++i) {
    const Instance& inst = data.instances[i];
    out.labels[i] = inst.label;
    std::uint32_t* row = out.bins.data() + i * static_cast<std::size_t>(D);
    for (int d = 0; d < D; ++d) row[d] = map.bin_of(d, 0.0);
    for (const auto& [id, value] : inst.features) {
      row[id - 1] = map.bin_of(id - 1, value);
    }
  }
  return out;
}

}  // namespace treesign
