#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "snn/baselines.hpp"
#include "snn/errors.hpp"
#include "snn/spectra.hpp"
#include "test_support.hpp"

using namespace snn;

namespace {

TrialDataset four_donor_pool() {
  auto ds = testutil::empty_dataset(5, 5, 1, 4);
  // target (patient 0) plus four donors with hand-picked covariates
  ds.covariates.row(0) << 70, 1, 25, 22;
  ds.covariates.row(1) << 70, 1, 25, 22;   // exact duplicate of the target
  ds.covariates.row(2) << 71, 1, 26, 21;   // near
  ds.covariates.row(3) << 55, 0, 40, 10;   // far
  ds.covariates.row(4) << 90, 0, 10, 30;   // far
  testutil::set_trajectory(ds, 0, 0, {20, 21, 22, 23, 24});
  testutil::set_trajectory(ds, 1, 0, {20, 21, 22, 23, 25});
  testutil::set_trajectory(ds, 2, 0, {20, 22, 22, 24, 27});
  testutil::set_trajectory(ds, 3, 0, {35, 36, 37, 38, 39});
  testutil::set_trajectory(ds, 4, 0, {10, 11, 12, 13, 15});
  ds.withdraw_from(0, 4);  // target drops before visit 4
  ds.validate();
  return ds;
}

}  // namespace

TEST_CASE("naive prediction is the complier mean") {
  auto ds = testutil::empty_dataset(2, 3, 1, 4);
  testutil::set_trajectory(ds, 0, 0, {3, 3, 3});
  testutil::set_trajectory(ds, 1, 0, {5, 5, 5});
  ds.validate();
  CHECK(naive_predict(ds, 3, 0, {0, 1}) == doctest::Approx(4.0));
  CHECK(naive_predict(ds, 3, 0, {1, 0}) == doctest::Approx(4.0));
  CHECK(naive_predict(ds, 3, 0, {1}) == doctest::Approx(5.0));
  CHECK_THROWS_AS(naive_predict(ds, 3, 0, {}), ValidationError);
}

TEST_CASE("naive prediction requires observed compliers") {
  auto ds = testutil::empty_dataset(2, 3, 1, 4);
  testutil::set_trajectory(ds, 0, 0, {3, 3, 3});
  testutil::set_trajectory(ds, 1, 0, {5, 5, 5});
  ds.withdraw_from(1, 3);
  ds.validate();
  CHECK_THROWS_AS(naive_predict(ds, 3, 0, {0, 1}), ValidationError);
}

TEST_CASE("LOCF carries the last observation forward") {
  auto ds = testutil::empty_dataset(1, 5, 1, 4);
  testutil::set_trajectory(ds, 0, 0, {20, 21, 22, 23, 24});
  ds.withdraw_from(0, 4);
  ds.validate();
  CHECK(locf_predict(ds, 0, 0, 4) == 22.0);
  CHECK(locf_predict(ds, 0, 0, 5) == 22.0);  // constant past the last visit

  auto single = testutil::empty_dataset(1, 5, 1, 4);
  testutil::set_trajectory(single, 0, 0, {19, 0, 0, 0, 0});
  single.withdraw_from(0, 2);
  single.validate();
  CHECK(locf_predict(single, 0, 0, 5) == 19.0);

  auto never = testutil::empty_dataset(1, 5, 1, 4);
  never.validate();
  CHECK_THROWS_AS(locf_predict(never, 0, 0, 5), ValidationError);
}

TEST_CASE("matching finds an exact duplicate") {
  const auto ds = four_donor_pool();
  MatchingConfig cfg;
  cfg.n_neighbors = 1;
  const double pred = matching_predict(ds, {0, 5, 0}, {1, 2, 3, 4}, cfg);
  CHECK(pred == 25.0);  // the duplicate donor's visit-5 outcome
}

TEST_CASE("matching with the whole pool equals the naive mean") {
  const auto ds = four_donor_pool();
  MatchingConfig cfg;
  cfg.n_neighbors = 10;  // more than the pool size
  const std::vector<int> pool{1, 2, 3, 4};
  CHECK(matching_predict(ds, {0, 5, 0}, pool, cfg) ==
        doctest::Approx(naive_predict(ds, 5, 0, pool)));
}

TEST_CASE("nearest-2 selection matches a brute-force distance sort") {
  const auto ds = four_donor_pool();
  MatchingConfig cfg;
  cfg.n_neighbors = 2;
  const double pred = matching_predict(ds, {0, 5, 0}, {1, 2, 3, 4}, cfg);

  // exhaustive oracle over standardized donor features
  const auto visits = observed_visits(ds, 0, 0, 5);
  Eigen::MatrixXd pool_features(4, 4 + visits.size());
  const std::vector<int> pool{1, 2, 3, 4};
  for (int r = 0; r < 4; ++r) {
    pool_features.row(r) = feature_vector(ds, pool[r], visits, 0).values;
  }
  const auto [std_mat, record] = spectra::standardize_columns(pool_features);
  const Eigen::VectorXd target =
      record.apply(feature_vector(ds, 0, visits, 0).values);
  std::vector<std::pair<double, int>> ranked;
  for (int r = 0; r < 4; ++r) {
    ranked.push_back({(std_mat.row(r).transpose() - target).norm(), pool[r]});
  }
  std::sort(ranked.begin(), ranked.end());
  const double oracle = (ds.outcome(ranked[0].second, 5, 0) +
                         ds.outcome(ranked[1].second, 5, 0)) /
                        2.0;
  CHECK(pred == doctest::Approx(oracle).epsilon(1e-12));
  CHECK_THROWS_AS(matching_predict(ds, {0, 5, 0}, {}, cfg), ValidationError);
}

TEST_CASE("baseline predictions stay within the donor outcome range") {
  const auto ds = four_donor_pool();
  const std::vector<int> pool{1, 2, 3, 4};
  std::vector<double> outcomes;
  for (int j : pool) outcomes.push_back(ds.outcome(j, 5, 0));
  const double lo = *std::min_element(outcomes.begin(), outcomes.end());
  const double hi = *std::max_element(outcomes.begin(), outcomes.end());

  MatchingConfig cfg;
  for (int k = 1; k <= 4; ++k) {
    cfg.n_neighbors = k;
    const double m = matching_predict(ds, {0, 5, 0}, pool, cfg);
    CHECK(m >= lo);
    CHECK(m <= hi);
  }
  const double n = naive_predict(ds, 5, 0, pool);
  CHECK(n >= lo);
  CHECK(n <= hi);
  const double l = locf_predict(ds, 0, 0, 5);
  CHECK(l >= 20);
  CHECK(l <= 22);
}
