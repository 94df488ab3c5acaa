#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "snn/rng.hpp"
#include "snn/trial_data.hpp"

namespace snn {

enum class FactorDistribution { kUniform, kGaussian };
enum class Mechanism { kMcar, kMar, kMnar };

const char* mechanism_name(Mechanism m);
Mechanism mechanism_from_name(const std::string& name);
const char* factor_distribution_name(FactorDistribution d);
FactorDistribution factor_distribution_from_name(const std::string& name);

// Ground-truth bilinear model: outcomes <u_i, v_t(a)> + eps and
// covariates <u_i, w_l> + eta.
struct LatentFactorModel {
  int rank = 2;
  Eigen::MatrixXd patient_factors;                 // N x r
  std::vector<Eigen::MatrixXd> visit_arm_factors;  // per arm, T x r
  Eigen::MatrixXd covariate_factors;               // d x r
  double outcome_noise_std = 0.0;
  double covariate_noise_std = 0.0;
  FactorDistribution distribution = FactorDistribution::kUniform;

  static LatentFactorModel sample(int n_patients, int n_visits, int n_arms,
                                  int n_covariates, int rank,
                                  FactorDistribution dist,
                                  double outcome_noise_std,
                                  double covariate_noise_std, Rng& rng);

  int n_patients() const { return static_cast<int>(patient_factors.rows()); }
  int n_visits() const {
    return visit_arm_factors.empty()
               ? 0
               : static_cast<int>(visit_arm_factors[0].rows());
  }
  int n_arms() const { return static_cast<int>(visit_arm_factors.size()); }
  int n_covariates() const {
    return static_cast<int>(covariate_factors.rows());
  }

  double mean_outcome(int patient, int visit, int arm) const {
    return patient_factors.row(patient)
        .dot(visit_arm_factors[arm].row(visit - 1));
  }
};

// Population deviation of the noiseless outcome means over all
// (patient, visit, arm); the reference for percent-noise settings.
double signal_scale(const LatentFactorModel& model);
double covariate_signal_scale(const LatentFactorModel& model);

struct GroundTruth {
  int n_patients = 0;
  int n_visits = 0;
  int n_arms = 0;
  std::vector<double> means;  // T x N x A, same layout as outcomes

  double at(int patient, int visit, int arm) const {
    return means[(static_cast<std::size_t>(visit - 1) * n_patients + patient) *
                     n_arms +
                 arm];
  }
};

struct GeneratedTrial {
  TrialDataset dataset;  // fully observed under the assigned arms
  GroundTruth ground_truth;
};

GeneratedTrial generate_trial(const LatentFactorModel& model, Rng& rng);

// Balanced uniform randomization; sizes differ by at most one.
std::vector<int> assign_arms(int n_patients, int n_arms, Rng& rng);

// Per-visit dropout fractions for visits 2..T.
struct DropoutRateSchedule {
  std::vector<double> rates;

  // The observed TauRx-style profile: 10%, 8%, 6%, 4% at visits 2..5.
  static DropoutRateSchedule standard();
  double rate_for_visit(int visit) const { return rates[visit - 2]; }
  void validate(int n_visits) const;
};

// Exponentially weighted mean with decay lambda = 2/(span+1); the last
// element carries the greatest weight.
double ewm(const std::vector<double>& values, int span);

// logistic(ewm(deltas, span))
double dropout_probability(const std::vector<double>& deltas, int span);

struct DropoutRecord {
  int patient = 0;
  int first_missing_visit = 0;
};

struct DropoutSimulation {
  TrialDataset dataset;                                // masked copy
  std::vector<std::vector<DropoutRecord>> dropout_sets;  // per arm, S(a)
};

// Simulates withdrawal on a fully observed trial. Per arm and visit
// t in 2..T, exactly round(rho(t) * N_a) still-active patients are
// withdrawn: uniformly for MCAR, otherwise by Bernoulli draws on the
// logistic EWM of baseline-subtracted outcomes (observed history for
// MAR, the t-1..T trajectory for MNAR), cycling over the active set in
// random order until the quota fills.
DropoutSimulation simulate_dropouts(const TrialDataset& complete,
                                    Mechanism mechanism,
                                    const DropoutRateSchedule& schedule,
                                    int baseline_covariate, Rng& rng);

}  // namespace snn
