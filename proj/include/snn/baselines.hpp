#pragma once

#include <vector>

#include "snn/trial_data.hpp"

namespace snn {

struct MatchingConfig {
  int n_neighbors = 5;  // K nearest donors, standardized Euclidean metric
  void validate() const;
};

// Mean outcome over compliers at (visit, arm); the same prediction for
// every target patient.
double naive_predict(const TrialDataset& ds, int visit, int arm,
                     const std::vector<int>& compliers);

// The patient's last observed outcome before target_visit. Undefined
// (raises) when the patient has no prior observation in the arm.
double locf_predict(const TrialDataset& ds, int patient, int arm,
                    int target_visit);

// Mean outcome of the n_neighbors donors closest to the target in the
// standardized [X, Y_T] feature space; ties broken by ascending patient
// index; the whole pool is used when it is smaller than n_neighbors.
double matching_predict(const TrialDataset& ds, const TargetTuple& target,
                        const std::vector<int>& donor_pool,
                        const MatchingConfig& config);

}  // namespace snn
