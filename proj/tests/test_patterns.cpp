#include <doctest.h>

#include <map>

#include "mmkd/patterns.hpp"
#include "support/matrix_eq.hpp"

using namespace mmkd;

namespace {

DropoutPattern make_pattern(std::initializer_list<bool> bits) { return DropoutPattern(std::vector<bool>(bits)); }

}  // namespace

TEST_CASE("mining family layout") {
  const PatternFamilies fam2 = enumerate_patterns(2);
  REQUIRE(fam2.mining.size() == 3);
  CHECK(fam2.mining[0] == make_pattern({true, true}));
  CHECK(fam2.mining[1] == make_pattern({false, true}));
  CHECK(fam2.mining[2] == make_pattern({true, false}));

  const PatternFamilies fam3 = enumerate_patterns(3);
  CHECK(fam3.mining.size() == 4);
  CHECK(fam3.mining[2] == make_pattern({true, false, true}));
}

TEST_CASE("full family is every nonempty pattern in canonical order") {
  const PatternFamilies fam = enumerate_patterns(3);
  REQUIRE(fam.full.size() == 7);
  CHECK(fam.full.front() == make_pattern({false, false, true}));
  CHECK(fam.full.back() == make_pattern({true, true, true}));
  for (std::size_t i = 0; i < fam.full.size(); ++i) {
    CHECK(fam.full[i].canonical_index() == i + 1);
    CHECK(fam.full[i].is_nonempty());
  }
  CHECK_THROWS_AS(enumerate_patterns(1), ContractError);
}

TEST_CASE("uniform sampling hits every nonempty pattern equally") {
  Rng rng(1234);
  const int draws = 30000;
  std::map<std::uint64_t, int> counts;
  for (int i = 0; i < draws; ++i) {
    const DropoutPattern p = sample_dropout_pattern(2, rng);
    REQUIRE(p.is_nonempty());
    counts[p.canonical_index()] += 1;
  }
  REQUIRE(counts.size() == 3);
  double chi_square = 0.0;
  const double expected = draws / 3.0;
  for (const auto& [index, count] : counts) {
    CHECK(std::abs(count / static_cast<double>(draws) - 1.0 / 3.0) < 0.02);
    chi_square += (count - expected) * (count - expected) / expected;
  }
  CHECK(chi_square < 13.82);  // chi-square critical value, df=2, p=0.001
}

TEST_CASE("sampling never emits the empty pattern") {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    CHECK(sample_dropout_pattern(3, rng).is_nonempty());
  }
  DropoutPolicy bernoulli{DropoutPolicy::Kind::kBernoulli, 0.1};
  for (int i = 0; i < 10000; ++i) {
    CHECK(sample_dropout_pattern(3, rng, bernoulli).is_nonempty());
  }
}

TEST_CASE("sampling is reproducible for a fixed seed") {
  Rng a(99), b(99);
  for (int i = 0; i < 200; ++i) {
    CHECK(sample_dropout_pattern(4, a) == sample_dropout_pattern(4, b));
  }
}

TEST_CASE("bernoulli policy matches its conditional distribution") {
  Rng rng(2024);
  DropoutPolicy policy{DropoutPolicy::Kind::kBernoulli, 0.8};
  const int draws = 30000;
  int both = 0;
  for (int i = 0; i < draws; ++i) {
    if (sample_dropout_pattern(2, rng, policy).is_all_present()) ++both;
  }
  // P(both | nonempty) = 0.64 / 0.96 = 2/3.
  CHECK(std::abs(both / static_cast<double>(draws) - 2.0 / 3.0) < 0.02);
}

TEST_CASE("apply_dropout zero-substitutes and nothing else") {
  Eigen::MatrixXd a(1, 2), b(1, 2);
  a << 1, 2;
  b << 3, 4;
  const std::vector<Eigen::MatrixXd> features{a, b};

  const auto all = apply_dropout(features, make_pattern({true, true}));
  CHECK(mmkd::test::bitwise_equal(all[0], a));
  CHECK(mmkd::test::bitwise_equal(all[1], b));

  const auto dropped = apply_dropout(features, make_pattern({true, false}));
  CHECK(mmkd::test::bitwise_equal(dropped[0], a));
  CHECK(mmkd::test::bitwise_equal(dropped[1], Eigen::MatrixXd::Zero(1, 2)));

  CHECK_THROWS_AS(apply_dropout(features, make_pattern({true, false, true})), ContractError);
}

TEST_CASE("apply_dropout is idempotent and shape preserving") {
  Rng rng(5);
  for (int trial = 0; trial < 25; ++trial) {
    const int m = 2 + static_cast<int>(rng.uniform_int(3));
    std::vector<Eigen::MatrixXd> features;
    for (int j = 0; j < m; ++j) {
      Eigen::MatrixXd f(3, 4);
      for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = rng.normal();
      features.push_back(std::move(f));
    }
    const DropoutPattern p = sample_dropout_pattern(m, rng);
    const auto once = apply_dropout(features, p);
    const auto twice = apply_dropout(once, p);
    for (int j = 0; j < m; ++j) {
      CHECK(once[j].rows() == features[static_cast<std::size_t>(j)].rows());
      CHECK(once[j].cols() == features[static_cast<std::size_t>(j)].cols());
      CHECK(mmkd::test::bitwise_equal(once[j], twice[j]));
    }
  }
}
