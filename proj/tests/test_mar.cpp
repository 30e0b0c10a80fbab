#include <doctest.h>

#include <cmath>

#include "mmkd/mar.hpp"
#include "mmkd/model.hpp"
#include "support/finite_diff.hpp"
#include "support/matrix_eq.hpp"

using namespace mmkd;

namespace {

DropoutPattern make_pattern(std::initializer_list<bool> bits) { return DropoutPattern(std::vector<bool>(bits)); }

// Logits whose argmax per row equals the requested class, 3 classes.
Eigen::MatrixXd logits_for_classes(const std::vector<int>& classes, int k) {
  Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(classes.size()), k);
  for (std::size_t i = 0; i < classes.size(); ++i) logits(static_cast<Eigen::Index>(i), classes[i]) = 5.0;
  return logits;
}

MiningState frozen_state(const Eigen::VectorXd& mean, int warmup = 3) {
  MiningState state(static_cast<int>(mean.size()), warmup);
  for (int e = 0; e < warmup; ++e) state.record_epoch(mean);
  state.finalize();
  return state;
}

}  // namespace

TEST_CASE("class histogram counts argmax classes") {
  PatternPredictions preds;
  preds.logits.push_back(logits_for_classes({0, 1, 1, 0, 2}, 3));
  const ClassHistogram hist = class_histogram(preds, 3);
  CHECK(hist.counts(0, 0) == 2);
  CHECK(hist.counts(0, 1) == 2);
  CHECK(hist.counts(0, 2) == 1);
  CHECK(hist.probs.row(0).sum() == doctest::Approx(1.0).epsilon(1e-12));

  PatternPredictions all_zero;
  all_zero.logits.push_back(logits_for_classes({0, 0, 0, 0}, 3));
  const ClassHistogram hz = class_histogram(all_zero, 3);
  CHECK(hz.counts(0, 0) == 4);
  CHECK(hz.counts(0, 1) == 0);

  // Exact ties resolve to the lowest class index.
  PatternPredictions tie;
  tie.logits.push_back(Eigen::MatrixXd::Zero(3, 3));
  CHECK(class_histogram(tie, 3).counts(0, 0) == 3);
}

TEST_CASE("pattern divergence is the KL against the all-present row") {
  PatternPredictions preds;
  preds.logits.push_back(logits_for_classes({0, 1}, 2));        // all-present: [1, 1]
  preds.logits.push_back(logits_for_classes({0, 1}, 2));        // drop 0: identical
  preds.logits.push_back(logits_for_classes({0, 0}, 2));        // drop 1: [2, 0]
  const ClassHistogram hist = class_histogram(preds, 2);
  const Eigen::VectorXd g = pattern_divergence(hist);
  REQUIRE(g.size() == 2);
  CHECK(g(0) <= 1e-6);
  CHECK(g(1) > 0.1);

  // Hand value: KL([.5,.5] || [.9,.1]) = ln(5/3).
  PatternPredictions hand2;
  std::vector<int> half(50, 0);
  for (int i = 25; i < 50; ++i) half[static_cast<std::size_t>(i)] = 1;
  std::vector<int> skew(50, 0);
  for (int i = 45; i < 50; ++i) skew[static_cast<std::size_t>(i)] = 1;
  hand2.logits.push_back(logits_for_classes(half, 2));
  hand2.logits.push_back(logits_for_classes(skew, 2));
  const Eigen::VectorXd gh = pattern_divergence(class_histogram(hand2, 2));
  CHECK(gh(0) == doctest::Approx(std::log(5.0 / 3.0)).epsilon(1e-3));
  CHECK(std::log(5.0 / 3.0) == doctest::Approx(0.5108).epsilon(1e-3));
}

TEST_CASE("divergences are nonnegative on random histograms") {
  Rng rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    PatternPredictions preds;
    for (int s = 0; s < 4; ++s) {
      std::vector<int> classes;
      for (int i = 0; i < 40; ++i) classes.push_back(static_cast<int>(rng.uniform_int(3)));
      preds.logits.push_back(logits_for_classes(classes, 3));
    }
    const Eigen::VectorXd g = pattern_divergence(class_histogram(preds, 3));
    CHECK(g.minCoeff() >= 0.0);
  }
}

TEST_CASE("literal softmax-of-counts mode saturates but stays finite") {
  PatternPredictions preds;
  std::vector<int> all_zero(100, 0);
  std::vector<int> all_one(100, 1);
  preds.logits.push_back(logits_for_classes(all_zero, 2));
  preds.logits.push_back(logits_for_classes(all_one, 2));
  const ClassHistogram hist = class_histogram(preds, 2, true);
  CHECK(hist.probs.row(0).sum() == doctest::Approx(1.0).epsilon(1e-9));
  const Eigen::VectorXd g = pattern_divergence(hist);
  CHECK(std::isfinite(g(0)));
  CHECK(g(0) > 1.0);  // saturated one-hot rows disagree hard
}

TEST_CASE("memory bank lifecycle and freeze contract") {
  MiningState state(3, 2);
  CHECK(!state.frozen());
  CHECK_THROWS_AS(state.finalize(), ContractError);  // premature
  Eigen::VectorXd g(3);
  g << 0.1, 0.5, 0.2;
  state.record_epoch(g);
  CHECK(state.epochs_recorded() == 1);
  state.record_epoch(g);
  CHECK_THROWS_AS(state.record_epoch(g), ContractError);  // bank full
  CHECK(mmkd::test::bitwise_equal(state.mean_divergence(), g));  // identical rows average to themselves
  state.finalize();
  CHECK(state.frozen());
  CHECK(state.strong_modality() == 1);
  CHECK_THROWS_AS(state.finalize(), ContractError);
  CHECK_THROWS_AS(state.record_epoch(g), ContractError);  // update after freeze
}

TEST_CASE("finalize picks the strong modality and builds the weak set") {
  Eigen::VectorXd mean(3);
  mean << 0.1, 0.5, 0.2;
  const MiningState state = frozen_state(mean);
  CHECK(state.strong_modality() == 1);
  const std::vector<DropoutPattern> expected{make_pattern({false, false, true}), make_pattern({true, false, false}),
                                             make_pattern({true, false, true})};
  CHECK(state.weak_set() == expected);
  CHECK(state.weak_set().size() == 3);  // 2^(m-1) - 1

  Eigen::VectorXd two(2);
  two << 0.3, 0.1;
  const MiningState pair = frozen_state(two);
  CHECK(pair.strong_modality() == 0);
  CHECK(pair.weak_set() == std::vector<DropoutPattern>{make_pattern({false, true})});

  Eigen::VectorXd tied(2);
  tied << 0.4, 0.4;
  const MiningState tie = frozen_state(tied);
  CHECK(tie.strong_modality() == 0);  // ties break low
  CHECK(tie.tie_detected());
}

TEST_CASE("weak set excludes the strong modality and partitions the family") {
  Eigen::VectorXd mean(4);
  mean << 0.1, 0.2, 0.9, 0.3;
  const MiningState state = frozen_state(mean);
  const PatternFamilies fam = enumerate_patterns(4);
  std::size_t containing = 0;
  for (const DropoutPattern& p : fam.full) {
    const bool has_strong = p.present[2];
    CHECK(state.in_weak_set(p) == !has_strong);
    containing += has_strong ? 1 : 0;
  }
  CHECK(containing + state.weak_set().size() == fam.full.size());
}

TEST_CASE("weak mask follows set membership") {
  Eigen::VectorXd mean(3);
  mean << 0.1, 0.5, 0.2;
  const MiningState state = frozen_state(mean);
  const std::vector<DropoutPattern> patterns{
      make_pattern({true, true, true}),    // full: contains strong
      make_pattern({false, true, false}),  // strong only
      make_pattern({true, false, true}),   // all weak modalities
      make_pattern({true, false, false}),
  };
  const std::vector<bool> mask = weak_mask(patterns, state);
  CHECK(mask == std::vector<bool>{false, false, true, true});

  MiningState unfrozen(3, 2);
  CHECK_THROWS_AS(weak_mask(patterns, unfrozen), ContractError);
}

TEST_CASE("single modality mask is the sr selection") {
  const PatternFamilies fam = enumerate_patterns(3);
  const std::vector<bool> mask = single_modality_mask(fam.full);
  int selected = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    CHECK(mask[i] == (fam.full[i].present_count() == 1));
    selected += mask[i] ? 1 : 0;
  }
  CHECK(selected == 3);
}

TEST_CASE("masked task loss: empty, full, and hand-computed selections") {
  Rng rng(23);
  Eigen::MatrixXd logits(4, 3);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = rng.normal();
  Eigen::VectorXi labels(4);
  labels << 0, 2, 1, 0;

  const MarLoss empty = masked_task_loss(logits, labels, {false, false, false, false});
  CHECK(empty.value == 0.0);
  CHECK(empty.grad.cwiseAbs().maxCoeff() == 0.0);

  const MarLoss full = masked_task_loss(logits, labels, {true, true, true, true});
  const CrossEntropy plain = softmax_cross_entropy(logits, labels);
  CHECK(full.value == plain.loss);

  // Mean cross entropy of rows 1 and 3 only, via the direct formula.
  const std::vector<bool> mask{false, true, false, true};
  const MarLoss two = masked_task_loss(logits, labels, mask);
  double expected = 0.0;
  for (Eigen::Index i : {Eigen::Index{1}, Eigen::Index{3}}) {
    double denom = 0.0;
    for (Eigen::Index c = 0; c < 3; ++c) denom += std::exp(logits(i, c));
    expected += -std::log(std::exp(logits(i, labels(i))) / denom);
  }
  expected /= 2.0;
  CHECK(two.value == doctest::Approx(expected).epsilon(1e-12));

  // Gradient: exactly zero on unselected rows, matches differences elsewhere.
  CHECK(two.grad.row(0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(two.grad.row(2).cwiseAbs().maxCoeff() == 0.0);
  const auto f = [&](const Eigen::MatrixXd& y) { return masked_task_loss(y, labels, mask).value; };
  CHECK(mmkd::test::check_gradient(f, logits, two.grad).max_rel_err <= 1e-6);

  CHECK_THROWS_AS(masked_task_loss(logits, labels, {true, false}), ContractError);
}

TEST_CASE("mar loss routes masks by mode") {
  Eigen::VectorXd mean(3);
  mean << 0.1, 0.5, 0.2;
  const MiningState state = frozen_state(mean);
  Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(2, 2);
  Eigen::VectorXi labels(2);
  labels << 0, 1;
  const std::vector<DropoutPattern> patterns{make_pattern({true, false, false}),
                                             make_pattern({false, true, false})};
  const MarLoss weak = mar_loss(logits, labels, patterns, state, RegularizeMode::kMar);
  CHECK(weak.value == doctest::Approx(std::log(2.0)).epsilon(1e-12));  // only sample 0 selected
  CHECK(weak.grad.row(1).cwiseAbs().maxCoeff() == 0.0);

  const MarLoss sr = mar_loss(logits, labels, patterns, state, RegularizeMode::kSr);
  CHECK(sr.value == doctest::Approx(std::log(2.0)).epsilon(1e-12));  // both are single-modality

  CHECK_THROWS_AS(mar_loss(logits, labels, patterns, state, RegularizeMode::kOff), ContractError);
  MiningState unfrozen(3, 2);
  CHECK_THROWS_AS(mar_loss(logits, labels, patterns, unfrozen, RegularizeMode::kMar), ContractError);
  CHECK_THROWS_AS(mar_loss(logits, labels, {patterns[0]}, state, RegularizeMode::kMar), ContractError);
}

TEST_CASE("collect_pattern_predictions forces each mining pattern") {
  Rng rng(29);
  const ModelSpec spec{8, 4, 6, 6};
  DeploymentNet net = DeploymentNet::create({5, 5, 5}, spec, 2, rng);

  ModalityBatch subset;
  subset.features.assign(3, Eigen::MatrixXd::Random(10, 5));
  subset.labels = Eigen::VectorXi::Zero(10);
  subset.patterns.assign(10, DropoutPattern::all_present(3));

  const PatternFamilies fam = enumerate_patterns(3);
  const PatternPredictions preds = collect_pattern_predictions(net, subset, fam.mining);
  REQUIRE(preds.logits.size() == 4);
  CHECK(preds.sample_count() == 10);

  // Slice 0 is the all-present forward pass.
  const DeploymentForward full = forward_deployment(net, subset);
  CHECK(mmkd::test::bitwise_equal(preds.logits[0], full.logits));

  // Deterministic on repeat.
  const PatternPredictions again = collect_pattern_predictions(net, subset, fam.mining);
  for (std::size_t s = 0; s < preds.logits.size(); ++s) {
    CHECK(mmkd::test::bitwise_equal(preds.logits[s], again.logits[s]));
  }

  ModalityBatch empty;
  empty.features.assign(3, Eigen::MatrixXd(0, 5));
  empty.labels.resize(0);
  CHECK_THROWS_AS(collect_pattern_predictions(net, empty, fam.mining), ContractError);
}
