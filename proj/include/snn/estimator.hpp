#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "snn/rng.hpp"
#include "snn/spectra.hpp"
#include "snn/trial_data.hpp"

namespace snn {

struct SnnConfig {
  int n_subgroups = 5;  // K
  double alpha = 0.2;   // diagnostic tolerance
  spectra::RankSelection rank_mode = spectra::RankSelection::universal();
  // Smallest admissible subgroup; when unset, max(10, d + |T| + 1) is
  // used per target so each subgroup supports a stable truncated SVD.
  std::optional<int> min_subgroup_size;
  double z_ci = 1.96;
  // The default noise estimate divides by (|T|+d); this switches to the
  // RMS convention dividing by sqrt(|T|+d).
  bool noise_sqrt_denominator = false;
  std::uint64_t seed = 0;

  void validate() const;
};

// One donor subgroup's fitted synthetic model.
struct SubgroupModel {
  std::vector<int> donor_indices;  // P_k, ascending
  Eigen::VectorXd beta;            // |P_k|
  int rank = 0;                    // b_k
  double theta = 0.0;
  double phi = 0.0;
  spectra::SpectralDecomposition decomposition;  // truncated, standardized
  spectra::Standardization standardization;
  double point_estimate = 0.0;
  // Affine record of the target-visit outcome column used to map the
  // fitted model back onto the raw outcome scale.
  double outcome_mean = 0.0;
  double outcome_scale = 1.0;
};

enum class IntervalKind { kNone, kEnsembleQuantile, kRegressionFormula };

const char* interval_kind_name(IntervalKind kind);

struct SnnPrediction {
  TargetTuple target;
  double estimate = std::numeric_limits<double>::quiet_NaN();
  std::vector<SubgroupModel> per_model;
  std::vector<int> retained;  // indices into per_model
  bool passed = false;
  double lower = std::numeric_limits<double>::quiet_NaN();
  double upper = std::numeric_limits<double>::quiet_NaN();
  IntervalKind interval_kind = IntervalKind::kNone;
  std::optional<double> noise_std;

  double theta_max() const;  // over retained models, else over all
  double phi_max() const;
};

// Random partition into K groups whose sizes differ by at most one.
// K is reduced to floor(|donors| / min_subgroup_size) (at least 1)
// whenever the requested K would leave groups below the floor.
std::vector<std::vector<int>> partition_donors(const std::vector<int>& donors,
                                               int n_subgroups,
                                               int min_subgroup_size, Rng& rng);

// Principal component regression, closed form: the minimizer of
// ||target - donor_matrix^T beta||_2 over beta in the span of the top
// `rank` left singular vectors of donor_matrix.
Eigen::VectorXd fit_pcr(const Eigen::VectorXd& target_features,
                        const Eigen::MatrixXd& donor_matrix, int rank);
Eigen::VectorXd fit_pcr(const Eigen::VectorXd& target_features,
                        const spectra::SpectralDecomposition& dec, int rank);

// theta: relative distance of the feature vector from the retained row
// space; phi: relative distance of the target-visit outcome column from
// the retained column space. Both inputs must live in the standardized
// geometry of the fitted donor matrix.
std::pair<double, double> compute_diagnostics(
    const Eigen::VectorXd& std_features, const Eigen::VectorXd& std_outcomes,
    const spectra::SpectralDecomposition& truncated);

SnnPrediction predict(const TrialDataset& ds, const TargetTuple& target,
                      const SnnConfig& config);

// Middle 95%: (2.5th, 97.5th) percentiles with linear interpolation
// between order statistics.
std::pair<double, double> prediction_interval_ensemble(
    const std::vector<double>& estimates);

struct SingleModelInterval {
  std::pair<double, double> mean_interval;
  std::pair<double, double> outcome_interval;
};

// Homoskedastic regression-formula intervals for a single retained
// model, centered at its point estimate. `std_outcomes` is the
// standardized target-visit outcome column; `noise_std` is on the raw
// outcome scale.
SingleModelInterval prediction_interval_single(
    const SubgroupModel& model, const Eigen::VectorXd& std_outcomes,
    double z_ci, double noise_std);

// nu-hat = theta * ||features|| / (|T|+d), or with a sqrt denominator
// when `sqrt_denominator` is set.
double estimate_noise_std(double theta, const Eigen::VectorXd& features,
                          bool sqrt_denominator = false);

}  // namespace snn
