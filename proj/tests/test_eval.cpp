#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "snn/errors.hpp"
#include "snn/eval.hpp"
#include "test_support.hpp"

using namespace snn;

namespace {

GeneratedTrial make_trial(int n_patients, std::uint64_t seed,
                          double noise_fraction = 0.0) {
  Rng rng(seed);
  auto model = LatentFactorModel::sample(n_patients, 5, 3, 4, 2,
                                         FactorDistribution::kUniform, 0.0,
                                         0.0, rng);
  if (noise_fraction > 0.0) {
    model.outcome_noise_std = noise_fraction * signal_scale(model);
    model.covariate_noise_std =
        noise_fraction * covariate_signal_scale(model);
  }
  return generate_trial(model, rng);
}

}  // namespace

TEST_CASE("nmse formula and properties") {
  CHECK(nmse({2, 3}, {2, 3}) == 0.0);
  CHECK(nmse({2, 2}, {1, 3}) == doctest::Approx(0.25));  // (1+1)/(4+4)

  // joint scaling leaves it unchanged
  CHECK(nmse({4, 4}, {2, 6}) == doctest::Approx(0.25));

  CHECK_THROWS_AS(nmse({}, {}), ValidationError);
  CHECK_THROWS_AS(nmse({1, 2}, {1}), ValidationError);
  CHECK_THROWS_AS(nmse({0, 0}, {1, 1}), ValidationError);
}

TEST_CASE("diagnostics split partitions the squared error") {
  std::vector<SnnPrediction> preds(4);
  preds[0].estimate = 1.0;
  preds[0].passed = true;
  preds[1].estimate = 2.5;
  preds[1].passed = true;
  preds[2].estimate = 9.0;
  preds[2].passed = false;
  preds[3].estimate = 7.0;
  preds[3].passed = false;
  const std::vector<double> truth{1.0, 2.0, 10.0, 9.0};

  const auto split = split_by_diagnostics(preds, truth);
  CHECK(split.n_passed == 2);
  CHECK(split.n_failed == 2);
  REQUIRE(split.passed_nmse);
  REQUIRE(split.failed_nmse);
  // pooled squared error equals the sum of the two subset errors
  const double pooled = nmse(truth, {1.0, 2.5, 9.0, 7.0}) *
                        (1 + 4 + 100 + 81);
  const double parts = *split.passed_nmse * (1 + 4) +
                       *split.failed_nmse * (100 + 81);
  CHECK(pooled == doctest::Approx(parts).epsilon(1e-12));

  // all passing leaves the failed subset absent
  preds[2].passed = preds[3].passed = true;
  const auto all_pass = split_by_diagnostics(preds, truth);
  CHECK(all_pass.n_failed == 0);
  CHECK_FALSE(all_pass.failed_nmse);
}

TEST_CASE("dropout study recovers noiseless data to the floor") {
  const auto trial = make_trial(120, 7001);
  StudyConfig cfg;
  cfg.n_repeats = 2;
  cfg.seed = 3;
  const auto report = run_dropout_study(trial.dataset, cfg);

  int snn_rows = 0;
  for (const auto& row : report.rows) {
    if (row.estimator == "snn") {
      ++snn_rows;
      CHECK(row.nmse <= 1e-10);
    }
  }
  CHECK(snn_rows == 2 * 3 * 3);  // repeats x mechanisms x arms

  // full grid: every cell holds one row per estimator
  std::map<std::tuple<int, std::string, std::string>, std::set<std::string>>
      cells;
  for (const auto& row : report.rows) {
    cells[{row.repeat_index, row.mechanism, row.arm}].insert(row.estimator);
  }
  CHECK(cells.size() == 2 * 3 * 3);
  for (const auto& [key, ests] : cells) {
    CHECK(ests ==
          std::set<std::string>{"snn", "naive", "locf", "matching"});
  }
}

TEST_CASE("dropout counts embedded in the report match the schedule") {
  const auto trial = make_trial(300, 7002, 0.1);
  StudyConfig cfg;
  cfg.n_repeats = 1;
  cfg.mechanisms = {Mechanism::kMar};
  cfg.estimators = {EstimatorKind::kNaive};
  cfg.seed = 11;
  const auto report = run_dropout_study(trial.dataset, cfg);
  // 100 per arm -> 10+8+6+4 = 28 dropout tuples per arm
  std::map<std::string, int> per_arm;
  for (const auto& t : report.tuples) per_arm[t.arm_label]++;
  for (const auto& [arm, count] : per_arm) CHECK(count == 28);
}

TEST_CASE("naive is exact when patients are homogeneous") {
  auto ds = testutil::empty_dataset(12, 5, 1, 4);
  for (int i = 0; i < 12; ++i) {
    ds.covariates.row(i) << 70, 1, 25, 22;
    testutil::set_trajectory(ds, i, 0, {20, 21, 22, 23, 24});
  }
  ds.validate();
  StudyConfig cfg;
  cfg.n_repeats = 1;
  cfg.mechanisms = {Mechanism::kMcar};
  cfg.estimators = {EstimatorKind::kNaive};
  cfg.schedule = DropoutRateSchedule{{0.25, 0.0, 0.0, 0.0}};
  const auto report = run_dropout_study(ds, cfg);
  REQUIRE(report.rows.size() == 1);
  CHECK(report.rows[0].nmse == 0.0);
}

TEST_CASE("synthetic RCT study excludes LOCF and recovers noiseless data") {
  const auto trial = make_trial(120, 7003);
  StudyConfig cfg;
  cfg.n_repeats = 2;
  cfg.seed = 5;
  const auto report = run_synthetic_rct_study(trial.dataset, cfg);

  std::set<std::string> estimators;
  for (const auto& row : report.rows) {
    estimators.insert(row.estimator);
    if (row.estimator == "snn") CHECK(row.nmse <= 1e-10);
    CHECK(row.mechanism == "none");
  }
  CHECK(estimators == std::set<std::string>{"snn", "naive", "matching"});
  CHECK(report.rows.size() == 2 * 3 * 3);  // repeats x arms x estimators
}

TEST_CASE("synthetic RCT withholds floor(N_a/2) patients per arm") {
  // 33 patients over 3 arms -> 11 per arm -> 5 withheld
  const auto trial = make_trial(33, 7004, 0.05);
  StudyConfig cfg;
  cfg.n_repeats = 1;
  cfg.estimators = {EstimatorKind::kNaive};
  cfg.seed = 2;
  const auto report = run_synthetic_rct_study(trial.dataset, cfg);
  std::map<std::string, int> per_arm;
  for (const auto& t : report.tuples) per_arm[t.arm_label]++;
  REQUIRE(per_arm.size() == 3);
  for (const auto& [arm, count] : per_arm) CHECK(count == 5);
}

TEST_CASE("reports are deterministic in the config and seed") {
  const auto trial = make_trial(90, 7005, 0.1);
  StudyConfig cfg;
  cfg.n_repeats = 2;
  cfg.seed = 31;
  const auto a = run_dropout_study(trial.dataset, cfg);
  const auto b = run_dropout_study(trial.dataset, cfg);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].nmse == b.rows[i].nmse);
    CHECK(a.rows[i].estimator == b.rows[i].estimator);
    CHECK(a.rows[i].arm == b.rows[i].arm);
  }
}

TEST_CASE("improvement summary names the next-best estimator") {
  StudyReport report;
  report.rows = {{0, "mcar", "0", "snn", 0.1},
                 {0, "mcar", "0", "naive", 0.4},
                 {0, "mcar", "0", "matching", 0.2}};
  const auto imp = snn_improvement(report);
  REQUIRE(imp);
  CHECK(imp->next_best == "matching");
  CHECK(imp->improvement == doctest::Approx(0.5));

  StudyReport no_snn;
  no_snn.rows = {{0, "mcar", "0", "naive", 0.4}};
  CHECK_FALSE(snn_improvement(no_snn));
}
