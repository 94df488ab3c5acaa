#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace snn {

// Arm value for patients with no observed outcome rows (covariates only).
inline constexpr int kNoArm = -1;

// One (patient, visit, arm) coordinate. Patients and arms are dense
// 0-based indices; visits are 1-based trial visit numbers (visit 0 is
// the pre-trial baseline and lives in the covariates).
struct TargetTuple {
  int patient = 0;
  int visit = 1;
  int arm = 0;
};

// Concatenated regression features [X_i, Y_i,tau : tau in visit_set].
struct FeatureVector {
  Eigen::VectorXd values;
  std::vector<int> visit_set;  // ascending 1-based visits
};

// Partially observed outcomes for one trial. An outcome at (i,t,a) is
// present exactly when arm_assignment[i] == a and dropout(i,t) == 0;
// dropout is absorbing in t. Instances are treated as immutable once
// built/validated and are safe for concurrent reads.
class TrialDataset {
 public:
  int n_patients = 0;   // N
  int n_visits = 0;     // T
  int n_arms = 0;       // A
  int n_covariates = 0; // d

  // Flat T x N x A storage; present entries carry the value.
  std::vector<double> outcome_values;
  std::vector<std::uint8_t> outcome_present;

  Eigen::MatrixXd covariates;          // N x d, no missing entries
  std::vector<int> arm_assignment;     // kNoArm when unobserved
  std::vector<std::uint8_t> dropout;   // N x T, row-major
  std::vector<std::string> patient_ids;
  std::vector<std::string> covariate_labels;
  std::vector<std::string> arm_labels; // dense index -> file label

  std::size_t cell(int patient, int visit, int arm) const {
    return (static_cast<std::size_t>(visit - 1) * n_patients + patient) *
               n_arms +
           arm;
  }
  bool observed(int patient, int visit, int arm) const {
    return outcome_present[cell(patient, visit, arm)] != 0;
  }
  double outcome(int patient, int visit, int arm) const;

  bool dropped(int patient, int visit) const {
    return dropout[static_cast<std::size_t>(patient) * n_visits + visit - 1] !=
           0;
  }

  void set_outcome(int patient, int visit, int arm, double value);
  // Removes outcomes at visits >= first_missing_visit and marks the
  // dropout indicators accordingly.
  void withdraw_from(int patient, int first_missing_visit);
  // Removes every outcome of the patient (covariates kept).
  void clear_patient(int patient);

  int arm_index(const std::string& label) const;  // -1 if unknown

  // Checks every structural invariant; raises ValidationError.
  void validate() const;
};

// Observation-indicator tensor (Omega).
struct MaskTensor {
  int n_patients = 0;
  int n_visits = 0;
  int n_arms = 0;
  std::vector<std::uint8_t> entries;  // same layout as outcomes

  static MaskTensor from_dataset(const TrialDataset& ds);
  bool at(int patient, int visit, int arm) const {
    return entries[(static_cast<std::size_t>(visit - 1) * n_patients +
                    patient) *
                       n_arms +
                   arm] != 0;
  }
  // Within-arm monotonicity: observed at t implies observed at all
  // earlier visits.
  void validate() const;
};

// Long-format ingestion. The covariate file defines the patient set;
// arm assignment and dropout indicators are reconstructed from which
// (patient, visit, arm) rows are present in the outcome file.
TrialDataset load_dataset(const std::string& outcome_path,
                          const std::string& covariate_path);

void write_dataset(const TrialDataset& ds, const std::string& outcome_path,
                   const std::string& covariate_path);

// P = {j : Omega_{j,t,a} = 1}, ascending patient indices.
std::vector<int> donor_set(const TrialDataset& ds, int visit, int arm);

// T = {tau < before : Omega_{i,tau,a} = 1}, ascending. Empty when the
// patient is assigned elsewhere or withdrew before the trial started.
std::vector<int> observed_visits(const TrialDataset& ds, int patient, int arm,
                                 int before);

FeatureVector feature_vector(const TrialDataset& ds, int patient,
                             const std::vector<int>& visit_set, int arm);

}  // namespace snn
