#include <doctest.h>

#include <stdexcept>

#include <sstream>

#include "treesign/dataset.hpp"
#include "treesign/detail/rng.hpp"
#include "treesign/errors.hpp"

using namespace treesign;

TEST_CASE("parse_libsvm reads sparse lines") {
  const RawDataset data = parse_libsvm("1 1:0.5 3:2.0");
  REQUIRE(data.size() == 1);
  CHECK(data.instances[0].label == 1);
  CHECK(data.instances[0].value_of(1) == 0.5);
  CHECK(data.instances[0].value_of(2) == 0.0);
  CHECK(data.instances[0].value_of(3) == 2.0);
  CHECK(data.num_features >= 3);
  CHECK(data.num_classes == 1);
}

TEST_CASE("parse_libsvm on empty input gives an empty dataset") {
  const RawDataset data = parse_libsvm("");
  CHECK(data.size() == 0);
  CHECK(data.num_features == 0);
}

TEST_CASE("parse_libsvm shifts 0-based labels to 1-based") {
  const RawDataset data = parse_libsvm("0 1:1\n3 1:2\n");
  CHECK(data.instances[0].label == 1);
  CHECK(data.instances[1].label == 4);
  CHECK(data.num_classes == 4);
}

TEST_CASE("parse_libsvm rejects malformed lines with the line number") {
  CHECK_THROWS_WITH_AS(parse_libsvm("1 1:0.5\n2 x:1\n"),
                       doctest::Contains("line 2"), ParseError);
  CHECK_THROWS_WITH_AS(parse_libsvm("1 3:0.5 2:1.0\n"),
                       doctest::Contains("not increasing"), ParseError);
  CHECK_THROWS_AS(parse_libsvm("abc 1:0.5\n"), ParseError);
  CHECK_THROWS_AS(parse_libsvm("1 2:0.5 2:1.0\n"), ParseError);
  CHECK_THROWS_AS(parse_libsvm("-1 1:0.5\n"), ParseError);
}

TEST_CASE("parse then serialize then parse is an identity") {
  const std::string text = "1 1:0.5 3:-2.25\n2 2:1e-3\n3 1:7 2:0.1 3:0.125\n";
  const RawDataset first = parse_libsvm(text);
  std::ostringstream out;
  write_libsvm(first, out);
  const RawDataset second = parse_libsvm(out.str());
  REQUIRE(first.size() == second.size());
  CHECK(first.num_features == second.num_features);
  CHECK(first.num_classes == second.num_classes);
  for (std::size_t i = 0; i < first.size(); ++i) {
    CHECK(first.instances[i].label == second.instances[i].label);
    CHECK(first.instances[i].features == second.instances[i].features);
  }
}

TEST_CASE("build_bins keeps distinct values when they fit") {
  const RawDataset data = parse_libsvm("1 1:0.5\n1 1:0.5\n2 1:2.0\n");
  const BinningMap map = build_bins(data, 255);
  REQUIRE(map.bin_count(0) == 2);
  CHECK(map.representative(0, 0) == 0.5);
  CHECK(map.representative(0, 1) == 2.0);
}

TEST_CASE("build_bins gives a constant feature a single bin") {
  const RawDataset data = parse_libsvm("1 1:3.5 2:1\n2 1:3.5 2:2\n");
  const BinningMap map = build_bins(data);
  CHECK(map.bin_count(0) == 1);
  CHECK(map.bin_of(0, 3.5) == 0);
  CHECK(map.bin_of(0, -100.0) == 0);
  CHECK(map.bin_of(0, 100.0) == 0);
}

TEST_CASE("build_bins rejects a zero bin budget and empty data") {
  const RawDataset data = parse_libsvm("1 1:1\n2 1:2\n");
  CHECK_THROWS_AS(build_bins(data, 0), std::invalid_argument);
  CHECK_THROWS_AS(build_bins(RawDataset{}), std::invalid_argument);
}

TEST_CASE("quantile merge matches the sorted-sequence oracle") {
  // 1000 distinct pseudo-uniform values into 10 bins of 100 each
  detail::SplitMix64 rng(42);
  RawDataset data;
  data.num_features = 1;
  data.num_classes = 2;
  std::vector<double> values;
  for (int i = 0; i < 1000; ++i) {
    Instance inst;
    inst.label = i % 2 + 1;
    const double v = rng.next_real();
    values.push_back(v);
    inst.features = {{1, v}};
    data.instances.push_back(inst);
  }
  const BinningMap map = build_bins(data, 10);
  REQUIRE(map.bin_count(0) == 10);

  std::sort(values.begin(), values.end());
  std::size_t previous_boundary = 0;
  for (std::uint32_t b = 0; b < 10; ++b) {
    const std::size_t boundary = b * values.size() / 10;
    CHECK(map.representative(0, b) == values[boundary]);
    if (b > 0) {
      const std::size_t members = boundary - previous_boundary;
      CHECK(members >= 99);
      CHECK(members <= 101);
    }
    previous_boundary = boundary;
  }
}

TEST_CASE("apply_bins maps representatives back and clamps strangers") {
  const RawDataset data = parse_libsvm("1 1:0.5\n2 1:2.0\n");
  const BinningMap map = build_bins(data);
  CHECK(map.bin_of(0, 0.5) == 0);
  CHECK(map.bin_of(0, 2.0) == 1);
  CHECK(map.bin_of(0, 99.0) == 1);   // beyond the training range
  CHECK(map.bin_of(0, -99.0) == 0);
  CHECK(map.bin_of(0, 1.2) == 0);    // below the midpoint cut at 1.25
  CHECK(map.bin_of(0, 1.25) == 1);

  const BinnedDataset binned = apply_bins(data, map);
  CHECK(binned.at(0, 0) == 0);
  CHECK(binned.at(1, 0) == 1);
  CHECK(binned.labels == std::vector<int>{1, 2});
}

TEST_CASE("sparse rows read absent features as zero when binning") {
  const RawDataset data = parse_libsvm("1 1:5 2:1\n2 2:2\n");
  const BinningMap map = build_bins(data);
  // feature 1 observed {5, implicit 0} -> two bins
  REQUIRE(map.bin_count(0) == 2);
  CHECK(map.representative(0, 0) == 0.0);
  const BinnedDataset binned = apply_bins(data, map);
  CHECK(binned.at(1, 0) == 0);
  CHECK(binned.at(0, 0) == 1);
}

TEST_CASE("binning properties: round trip, monotonicity, bin budget") {
  detail::SplitMix64 rng(7);
  RawDataset data;
  data.num_features = 3;
  data.num_classes = 2;
  for (int i = 0; i < 400; ++i) {
    Instance inst;
    inst.label = i % 2 + 1;
    // feature 1 continuous, feature 2 few distinct values, feature 3 sparse
    inst.features.emplace_back(1, rng.next_real() * 10.0 - 5.0);
    inst.features.emplace_back(2, static_cast<double>(rng.next_below(7)));
    if (rng.next_below(3) == 0) {
      inst.features.emplace_back(3, rng.next_real());
    }
    data.instances.push_back(inst);
  }
  const std::uint32_t max_bins = 37;
  const BinningMap map = build_bins(data, max_bins);

  for (int d = 0; d < 3; ++d) {
    CHECK(map.bin_count(d) <= max_bins);
    for (std::uint32_t b = 0; b < map.bin_count(d); ++b) {
      CHECK(map.bin_of(d, map.representative(d, b)) == b);
    }
    for (int trial = 0; trial < 200; ++trial) {
      const double v1 = rng.next_real() * 14.0 - 7.0;
      const double v2 = rng.next_real() * 14.0 - 7.0;
      const double lo = std::min(v1, v2);
      const double hi = std::max(v1, v2);
      CHECK(map.bin_of(d, lo) <= map.bin_of(d, hi));
    }
  }

  const BinnedDataset binned = apply_bins(data, map);
  for (std::size_t i = 0; i < binned.size(); ++i) {
    for (int d = 0; d < 3; ++d) {
      CHECK(binned.at(i, d) < map.bin_count(d));
    }
  }
}
