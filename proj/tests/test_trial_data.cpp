#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "snn/errors.hpp"
#include "snn/trial_data.hpp"
#include "test_support.hpp"

using namespace snn;
using testutil::TempDir;
using testutil::write_text;

namespace {

const char* kCovariates =
    "patient_id,age,sex,baseline_adascog,baseline_mmse\n"
    "p1,70,1,25,22\n"
    "p2,64,0,31,18\n";

TrialDataset load_from(const std::string& outcomes_body,
                       const std::string& covariates_body,
                       const TempDir& dir) {
  write_text(dir.path("o.csv"), outcomes_body);
  write_text(dir.path("c.csv"), covariates_body);
  return load_dataset(dir.path("o.csv"), dir.path("c.csv"));
}

}  // namespace

TEST_CASE("a fully observed patient has an all-zero dropout row") {
  TempDir dir("load_full");
  std::string outcomes = "patient_id,visit,arm,value\n";
  for (int t = 1; t <= 5; ++t) {
    outcomes += "p1," + std::to_string(t) + ",armA," + std::to_string(20 + t) +
                "\n";
    outcomes += "p2," + std::to_string(t) + ",armB," + std::to_string(30 - t) +
                "\n";
  }
  const auto ds = load_from(outcomes, kCovariates, dir);
  CHECK(ds.n_patients == 2);
  CHECK(ds.n_visits == 5);
  CHECK(ds.n_arms == 2);
  CHECK(ds.n_covariates == 4);
  CHECK(ds.arm_assignment[0] == 0);
  CHECK(ds.arm_labels[0] == "armA");  // first-seen order
  for (int t = 1; t <= 5; ++t) CHECK_FALSE(ds.dropped(0, t));
  CHECK(ds.outcome(0, 3, 0) == 23.0);
}

TEST_CASE("an absorbing tail is reconstructed from missing rows") {
  TempDir dir("load_tail");
  const std::string outcomes =
      "patient_id,visit,arm,value\n"
      "p1,1,a0,20\np1,2,a0,21\np1,3,a0,22\n"
      "p2,1,a0,30\np2,2,a0,29\np2,3,a0,28\np2,4,a0,27\np2,5,a0,26\n";
  const auto ds = load_from(outcomes, kCovariates, dir);
  CHECK(ds.n_visits == 5);
  CHECK_FALSE(ds.dropped(0, 3));
  CHECK(ds.dropped(0, 4));
  CHECK(ds.dropped(0, 5));
  CHECK_FALSE(ds.observed(0, 4, 0));
}

TEST_CASE("two arms for one (patient, visit) violate the observation rule") {
  TempDir dir("load_sutva");
  const std::string outcomes =
      "patient_id,visit,arm,value\n"
      "p1,2,a0,20\n"
      "p1,2,a1,21\n";
  CHECK_THROWS_AS(load_from(outcomes, kCovariates, dir), ValidationError);
}

TEST_CASE("a gap in observed visits is a non-absorbing pattern") {
  TempDir dir("load_gap");
  const std::string outcomes =
      "patient_id,visit,arm,value\n"
      "p1,1,a0,20\np1,2,a0,21\np1,4,a0,23\n";
  CHECK_THROWS_WITH_AS(load_from(outcomes, kCovariates, dir),
                       doctest::Contains("non-absorbing"), ValidationError);
}

TEST_CASE("duplicate rows and unknown patients are rejected with context") {
  TempDir dir("load_dup");
  CHECK_THROWS_WITH_AS(
      load_from("patient_id,visit,arm,value\np1,1,a0,20\np1,1,a0,21\n",
                kCovariates, dir),
      doctest::Contains("duplicate"), ValidationError);
  CHECK_THROWS_WITH_AS(
      load_from("patient_id,visit,arm,value\npX,1,a0,20\n", kCovariates, dir),
      doctest::Contains("unknown patient"), ValidationError);
  CHECK_THROWS_AS(
      load_from("patient_id,visit,arm,value\np1,1,a0,not_a_number\n",
                kCovariates, dir),
      ValidationError);
  CHECK_THROWS_AS(
      load_from("patient_id,visit,arm,value\np1,0,a0,19\n", kCovariates, dir),
      ValidationError);
}

TEST_CASE("covariate-only patients are retained without an arm") {
  TempDir dir("load_covonly");
  const std::string outcomes =
      "patient_id,visit,arm,value\n"
      "p2,1,a0,30\np2,2,a0,29\n";
  const auto ds = load_from(outcomes, kCovariates, dir);
  CHECK(ds.arm_assignment[0] == kNoArm);
  CHECK(ds.arm_assignment[1] == 0);
  for (int t = 1; t <= ds.n_visits; ++t) CHECK(ds.dropped(0, t));
}

TEST_CASE("write/load round trip preserves the dataset") {
  TempDir dir("round_trip");
  auto ds = testutil::empty_dataset(4, 5, 2, 4);
  ds.covariates << 70, 1, 25, 22, 64, 0, 31, 18, 71, 1, 27, 20, 66, 0, 29, 21;
  testutil::set_trajectory(ds, 0, 0, {20, 21, 22, 23, 24});
  testutil::set_trajectory(ds, 1, 1, {30, 29, 28, 27, 26});
  testutil::set_trajectory(ds, 2, 0, {25, 25, 25, 25, 25});
  ds.withdraw_from(2, 4);  // dropout at visit 4
  ds.validate();

  write_dataset(ds, dir.path("o.csv"), dir.path("c.csv"));
  const auto back = load_dataset(dir.path("o.csv"), dir.path("c.csv"));
  CHECK(back.n_patients == ds.n_patients);
  CHECK(back.n_visits == ds.n_visits);
  CHECK(back.n_arms == ds.n_arms);
  CHECK(back.patient_ids == ds.patient_ids);
  CHECK(back.arm_assignment == ds.arm_assignment);
  CHECK(back.dropout == ds.dropout);
  CHECK(back.outcome_present == ds.outcome_present);
  for (std::size_t idx = 0; idx < ds.outcome_values.size(); ++idx) {
    if (ds.outcome_present[idx]) {
      CHECK(back.outcome_values[idx] == ds.outcome_values[idx]);
    }
  }
  CHECK((back.covariates - ds.covariates).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("donor sets shrink monotonically and stay disjoint across arms") {
  auto ds = testutil::empty_dataset(6, 5, 2, 4);
  testutil::set_trajectory(ds, 0, 0, {1, 2, 3, 4, 5});
  testutil::set_trajectory(ds, 1, 0, {2, 3, 4, 5, 6});
  testutil::set_trajectory(ds, 2, 0, {3, 4, 5, 6, 7});
  testutil::set_trajectory(ds, 3, 1, {9, 8, 7, 6, 5});
  testutil::set_trajectory(ds, 4, 1, {8, 7, 6, 5, 4});
  ds.withdraw_from(2, 3);
  ds.validate();

  CHECK(donor_set(ds, 2, 0) == std::vector<int>{0, 1, 2});
  CHECK(donor_set(ds, 3, 0) == std::vector<int>{0, 1});  // p3 dropped at 3
  CHECK(donor_set(ds, 5, 1) == std::vector<int>{3, 4});

  for (int t = 2; t <= 5; ++t) {
    for (int a = 0; a < 2; ++a) {
      const auto now = donor_set(ds, t, a);
      const auto before = donor_set(ds, t - 1, a);
      CHECK(std::includes(before.begin(), before.end(), now.begin(),
                          now.end()));
    }
    const auto a0 = donor_set(ds, t, 0);
    const auto a1 = donor_set(ds, t, 1);
    std::vector<int> overlap;
    std::set_intersection(a0.begin(), a0.end(), a1.begin(), a1.end(),
                          std::back_inserter(overlap));
    CHECK(overlap.empty());
  }

  // patient 5 never enrolled anywhere
  const auto all0 = donor_set(ds, 1, 0);
  CHECK(std::find(all0.begin(), all0.end(), 5) == all0.end());
}

TEST_CASE("observed_visits honors dropout and arm assignment") {
  auto ds = testutil::empty_dataset(3, 5, 2, 4);
  testutil::set_trajectory(ds, 0, 0, {1, 2, 3, 4, 5});
  testutil::set_trajectory(ds, 1, 1, {5, 4, 3, 2, 1});
  ds.withdraw_from(0, 4);
  ds.validate();

  CHECK(observed_visits(ds, 0, 0, 5) == std::vector<int>{1, 2, 3});
  CHECK(observed_visits(ds, 1, 0, 5).empty());  // assigned to the other arm
  CHECK(observed_visits(ds, 0, 0, 1).empty());  // nothing precedes visit 1
  CHECK(observed_visits(ds, 2, 0, 5).empty());  // never enrolled
}

TEST_CASE("feature vectors concatenate covariates then outcomes") {
  auto ds = testutil::empty_dataset(2, 5, 1, 4);
  ds.covariates.row(0) << 70, 1, 25, 22;
  testutil::set_trajectory(ds, 0, 0, {20.0, 21.5, 23.0, 24.0, 25.0});
  ds.validate();

  const auto fv = feature_vector(ds, 0, {1, 2}, 0);
  REQUIRE(fv.values.size() == 6);
  CHECK(fv.values[3] == 22.0);
  CHECK(fv.values[4] == 20.0);
  CHECK(fv.values[5] == 21.5);

  const auto fv1 = feature_vector(ds, 0, {1}, 0);
  Eigen::VectorXd expected(5);
  expected << 70, 1, 25, 22, 20.0;
  CHECK((fv1.values - expected).cwiseAbs().maxCoeff() == 0.0);

  const auto empty = feature_vector(ds, 1, {}, 0);  // covariates only
  CHECK(empty.values.size() == 4);

  CHECK_THROWS_AS(feature_vector(ds, 1, {1}, 0), ValidationError);
}

TEST_CASE("mask tensor mirrors presence and is monotone") {
  auto ds = testutil::empty_dataset(3, 4, 2, 4);
  testutil::set_trajectory(ds, 0, 0, {1, 2, 3, 4});
  testutil::set_trajectory(ds, 1, 1, {4, 3, 2, 1});
  ds.withdraw_from(1, 3);
  ds.validate();
  auto mask = MaskTensor::from_dataset(ds);
  mask.validate();
  CHECK(mask.at(0, 4, 0));
  CHECK(mask.at(1, 2, 1));
  CHECK_FALSE(mask.at(1, 3, 1));

  // corrupting monotonicity is caught: observed at visit 4 but not 3
  mask.entries[(static_cast<std::size_t>(4 - 1) * 3 + 1) * 2 + 1] = 1;
  CHECK_THROWS_AS(mask.validate(), ValidationError);
}
