#include "snn/baselines.hpp"

#include <algorithm>
#include <sstream>

#include "snn/errors.hpp"
#include "snn/spectra.hpp"

namespace snn {

void MatchingConfig::validate() const {
  if (n_neighbors < 1) {
    throw ValidationError("matching: n_neighbors must be >= 1");
  }
}

double naive_predict(const TrialDataset& ds, int visit, int arm,
                     const std::vector<int>& compliers) {
  if (compliers.empty()) {
    throw ValidationError("naive_predict: empty complier set");
  }
  double sum = 0.0;
  for (int j : compliers) {
    if (!ds.observed(j, visit, arm)) {
      std::ostringstream os;
      os << "naive_predict: complier " << ds.patient_ids[j]
         << " not observed at (visit=" << visit << ", arm="
         << ds.arm_labels[arm] << ")";
      throw ValidationError(os.str());
    }
    sum += ds.outcome(j, visit, arm);
  }
  return sum / static_cast<double>(compliers.size());
}

double locf_predict(const TrialDataset& ds, int patient, int arm,
                    int target_visit) {
  const auto visits = observed_visits(ds, patient, arm, target_visit);
  if (visits.empty()) {
    throw ValidationError(
        "locf_predict: no prior observed outcome for patient " +
        ds.patient_ids[patient]);
  }
  return ds.outcome(patient, visits.back(), arm);
}

double matching_predict(const TrialDataset& ds, const TargetTuple& target,
                        const std::vector<int>& donor_pool,
                        const MatchingConfig& config) {
  config.validate();
  if (donor_pool.empty()) {
    throw ValidationError("matching_predict: empty donor pool");
  }
  const auto visit_set =
      observed_visits(ds, target.patient, target.arm, target.visit);
  const FeatureVector fv =
      feature_vector(ds, target.patient, visit_set, target.arm);
  const int m = static_cast<int>(donor_pool.size());
  const int p = static_cast<int>(fv.values.size());

  Eigen::MatrixXd donor_raw(m, p);
  for (int r = 0; r < m; ++r) {
    donor_raw.row(r) =
        feature_vector(ds, donor_pool[r], visit_set, target.arm).values;
  }
  Eigen::MatrixXd donor_std;
  spectra::Standardization record = spectra::Standardization::identity(p);
  if (m >= 2) {
    std::tie(donor_std, record) = spectra::standardize_columns(donor_raw);
  } else {
    donor_std = donor_raw;
  }
  const Eigen::VectorXd z = record.apply(fv.values);

  std::vector<std::pair<double, int>> ranked(m);
  for (int r = 0; r < m; ++r) {
    ranked[r] = {(donor_std.row(r).transpose() - z).norm(), donor_pool[r]};
  }
  std::sort(ranked.begin(), ranked.end());

  const int take = std::min(config.n_neighbors, m);
  double sum = 0.0;
  for (int r = 0; r < take; ++r) {
    sum += ds.outcome(ranked[r].second, target.visit, target.arm);
  }
  return sum / static_cast<double>(take);
}

}  // namespace snn
