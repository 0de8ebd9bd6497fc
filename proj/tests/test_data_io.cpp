#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "dfl/data.hpp"
#include "dfl/synth.hpp"

using namespace dfl;

TEST_CASE("idx rank-3 container parses to the declared shape") {
  Tensor images({2, 3, 3});
  for (std::size_t i = 0; i < images.numel(); ++i) {
    images[i] = static_cast<double>(i * 14 % 256) / 255.0;
  }
  std::string bytes = serialize_idx(images);
  Tensor back = parse_idx(bytes);
  CHECK(back.shape() == Shape{2, 3, 3});
  CHECK(back == images);
  // full round trip is bit-exact
  CHECK(serialize_idx(back) == bytes);
}

TEST_CASE("idx endpoints rescale to exactly 0 and 1") {
  std::string bytes;
  bytes.push_back(0);
  bytes.push_back(0);
  bytes.push_back(0x08);
  bytes.push_back(1);  // rank 1
  for (char c : {0, 0, 0, 2}) bytes.push_back(c);
  bytes.push_back(static_cast<char>(255));
  bytes.push_back(static_cast<char>(0));
  Tensor t = parse_idx(bytes);
  CHECK(t[0] == 1.0);
  CHECK(t[1] == 0.0);
}

TEST_CASE("idx errors carry byte offsets") {
  CHECK_THROWS_WITH_AS(parse_idx("xx"), doctest::Contains("magic"), DataError);
  std::string bad;
  bad.push_back(0);
  bad.push_back(0);
  bad.push_back(0x09);  // unsupported type
  bad.push_back(1);
  CHECK_THROWS_WITH_AS(parse_idx(bad), doctest::Contains("offset 2"), DataError);

  Tensor images({2, 2, 2});
  std::string bytes = serialize_idx(images);
  std::string truncated = bytes.substr(0, bytes.size() - 3);
  CHECK_THROWS_WITH_AS(parse_idx(truncated), doctest::Contains("offset 16"),
                       DataError);
}

TEST_CASE("csv parsing, label column, and rescaling") {
  std::string text = "0.5,10,0\n1.5,20,1\n1.0,30,1\n";
  Dataset data = parse_csv_dataset(text, -1, /*rescale=*/true);
  CHECK(data.size() == 3);
  CHECK(data.feature_count() == 2);
  CHECK(data.labels == std::vector<double>{0, 1, 1});
  // min-max per column: first column spans [0.5, 1.5]
  CHECK(data.features[0] == doctest::Approx(0.0));
  CHECK(data.features[2] == doctest::Approx(1.0));
  CHECK(data.features[4] == doctest::Approx(0.5));
  REQUIRE(data.rescale.has_value());
  CHECK(data.rescale->min[0] == 0.5);
  CHECK(data.rescale->max[1] == 30.0);
}

TEST_CASE("csv in-range data passes through with rescale off") {
  std::string text = "0.25,0.75,1\n0.5,0.5,0\n";
  Dataset data = parse_csv_dataset(text, 2, /*rescale=*/false);
  CHECK(data.features[0] == 0.25);
  CHECK(data.features[1] == 0.75);
  data.validate_feature_range();
}

TEST_CASE("constant csv columns rescale to zero") {
  std::string text = "5,0.1,0\n5,0.9,1\n";
  Dataset data = parse_csv_dataset(text, -1, true);
  CHECK(data.features[0] == 0.0);
  CHECK(data.features[2] == 0.0);
}

TEST_CASE("non-numeric csv cells name the row and column") {
  CHECK_THROWS_WITH_AS(parse_csv_dataset("1,2\n1,x\n", -1, false),
                       doctest::Contains("row 2, column 2"), DataError);
}

TEST_CASE("train-split rescale statistics apply to test data") {
  Dataset train;
  train.features = Tensor({2, 1}, {2.0, 4.0});
  train.labels = {0, 1};
  Dataset test;
  test.features = Tensor({2, 1}, {3.0, 5.0});
  test.labels = {0, 1};
  RescaleStats stats = compute_rescale_stats(train);
  Dataset strain = apply_rescale(train, stats);
  Dataset stest = apply_rescale(test, stats);
  CHECK(strain.features[0] == 0.0);
  CHECK(strain.features[1] == 1.0);
  CHECK(stest.features[0] == doctest::Approx(0.5));
  CHECK(stest.features[1] == 1.0);  // clipped: beyond the train max
}

TEST_CASE("class filtering keeps counts and relabels") {
  Dataset digits = synth_digits(400, 11);
  std::size_t sevens = 0, nines = 0;
  for (double y : digits.labels) {
    if (y == 7) ++sevens;
    if (y == 9) ++nines;
  }
  Dataset kept = filter_classes(digits, {7, 9}, /*relabel=*/true);
  CHECK(kept.size() == sevens + nines);
  for (double y : kept.labels) CHECK((y == 0.0 || y == 1.0));
  CHECK(kept.num_classes() == 2);

  Dataset same = filter_classes(digits, {1, 7, 9}, false);
  CHECK(same.size() == digits.size());

  CHECK_THROWS_AS(filter_classes(digits, {3}, true), DataError);

  Dataset ones = filter_classes(digits, {1}, true);
  CHECK(ones.num_classes() == 1);
}

TEST_CASE("splits are sized, deterministic, disjoint, and exhaustive") {
  Dataset data = synth_tabular(100, 4, 2, 3);
  auto parts = split(data, {0.7, 0.2, 0.1}, 42);
  CHECK(parts[0].size() == 70);
  CHECK(parts[1].size() == 20);
  CHECK(parts[2].size() == 10);

  auto again = split(data, {0.7, 0.2, 0.1}, 42);
  for (int k = 0; k < 3; ++k) {
    CHECK(parts[k].features == again[k].features);
    CHECK(parts[k].labels == again[k].labels);
  }

  auto two = split(data, {0.8, 0.2}, 1);
  CHECK(two[0].size() == 8 * data.size() / 10);
  CHECK(two[1].size() == 2 * data.size() / 10);

  // disjoint + exhaustive: every original row appears exactly once
  std::multiset<std::vector<double>> rows;
  for (const auto& part : parts) {
    for (std::size_t i = 0; i < part.size(); ++i) {
      const double* r = part.features.data() + i * 4;
      rows.insert(std::vector<double>(r, r + 4));
    }
  }
  CHECK(rows.size() == 100);
  for (std::size_t i = 0; i < 100; ++i) {
    const double* r = data.features.data() + i * 4;
    CHECK(rows.count(std::vector<double>(r, r + 4)) >= 1);
  }

  CHECK_THROWS_AS(split(data, {0.5, 0.4}, 1), ConfigError);
}

TEST_CASE("synthetic digits write real idx files") {
  Dataset digits = synth_digits(30, 5);
  write_digit_idx_files(digits, "imgs_test.idx", "labels_test.idx");
  Dataset back = load_idx_dataset("imgs_test.idx", "labels_test.idx");
  CHECK(back.size() == 30);
  CHECK(back.feature_shape() == Shape{28, 28});
  std::set<int> classes;
  for (double y : back.labels) classes.insert(static_cast<int>(y));
  for (int c : classes) CHECK((c == 1 || c == 7 || c == 9));
  back.validate_feature_range();
  std::remove("imgs_test.idx");
  std::remove("labels_test.idx");
}
