#include "snn/trial_data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "snn/csv.hpp"
#include "snn/errors.hpp"

namespace snn {

double TrialDataset::outcome(int patient, int visit, int arm) const {
  const auto idx = cell(patient, visit, arm);
  if (!outcome_present[idx]) {
    std::ostringstream os;
    os << "outcome not observed at (patient=" << patient_ids[patient]
       << ", visit=" << visit << ", arm=" << arm_labels[arm] << ")";
    throw ValidationError(os.str());
  }
  return outcome_values[idx];
}

void TrialDataset::set_outcome(int patient, int visit, int arm, double value) {
  const auto idx = cell(patient, visit, arm);
  outcome_values[idx] = value;
  outcome_present[idx] = 1;
}

void TrialDataset::withdraw_from(int patient, int first_missing_visit) {
  for (int t = first_missing_visit; t <= n_visits; ++t) {
    dropout[static_cast<std::size_t>(patient) * n_visits + t - 1] = 1;
    for (int a = 0; a < n_arms; ++a) {
      const auto idx = cell(patient, t, a);
      outcome_present[idx] = 0;
      outcome_values[idx] = 0.0;
    }
  }
}

void TrialDataset::clear_patient(int patient) {
  withdraw_from(patient, 1);
  arm_assignment[patient] = kNoArm;
}

int TrialDataset::arm_index(const std::string& label) const {
  for (int a = 0; a < n_arms; ++a) {
    if (arm_labels[a] == label) return a;
  }
  return -1;
}

void TrialDataset::validate() const {
  const std::size_t n = static_cast<std::size_t>(n_patients);
  if (n_patients <= 0 || n_visits <= 0 || n_arms <= 0 || n_covariates <= 0) {
    throw ValidationError("dataset dimensions must be positive");
  }
  if (patient_ids.size() != n || arm_assignment.size() != n ||
      dropout.size() != n * n_visits ||
      covariates.rows() != n_patients ||
      covariates.cols() != n_covariates ||
      outcome_values.size() != n * n_visits * n_arms ||
      outcome_present.size() != outcome_values.size() ||
      arm_labels.size() != static_cast<std::size_t>(n_arms) ||
      covariate_labels.size() != static_cast<std::size_t>(n_covariates)) {
    throw ValidationError("dataset field shapes are inconsistent");
  }
  if (!covariates.allFinite()) {
    throw ValidationError("covariate matrix has missing or non-finite entries");
  }
  for (int i = 0; i < n_patients; ++i) {
    const int ai = arm_assignment[i];
    if (ai != kNoArm && (ai < 0 || ai >= n_arms)) {
      throw ValidationError("arm assignment out of range for patient " +
                            patient_ids[i]);
    }
    bool prev_dropped = false;
    for (int t = 1; t <= n_visits; ++t) {
      const bool drop = dropped(i, t);
      if (prev_dropped && !drop) {
        throw ValidationError("non-absorbing dropout pattern for patient " +
                              patient_ids[i]);
      }
      prev_dropped = drop;
      int arms_present = 0;
      for (int a = 0; a < n_arms; ++a) {
        const bool present = observed(i, t, a);
        if (present) ++arms_present;
        const bool expected = (ai == a) && !drop;
        if (present != expected) {
          std::ostringstream os;
          os << "observation rule violated at (patient=" << patient_ids[i]
             << ", visit=" << t << ", arm=" << arm_labels[a] << ")";
          throw ValidationError(os.str());
        }
        if (present && !std::isfinite(outcome_values[cell(i, t, a)])) {
          throw ValidationError("non-finite outcome for patient " +
                                patient_ids[i]);
        }
      }
      if (arms_present > 1) {
        throw ValidationError("multiple arms observed for patient " +
                              patient_ids[i]);
      }
    }
    if (ai == kNoArm) {
      for (int t = 1; t <= n_visits; ++t) {
        if (!dropped(i, t)) {
          throw ValidationError(
              "patient without arm must have all-missing outcomes: " +
              patient_ids[i]);
        }
      }
    }
  }
}

MaskTensor MaskTensor::from_dataset(const TrialDataset& ds) {
  MaskTensor m;
  m.n_patients = ds.n_patients;
  m.n_visits = ds.n_visits;
  m.n_arms = ds.n_arms;
  m.entries = ds.outcome_present;
  return m;
}

void MaskTensor::validate() const {
  for (int a = 0; a < n_arms; ++a) {
    for (int i = 0; i < n_patients; ++i) {
      for (int t = 2; t <= n_visits; ++t) {
        if (at(i, t, a) && !at(i, t - 1, a)) {
          std::ostringstream os;
          os << "mask not monotone for patient index " << i << " in arm " << a
             << " at visit " << t;
          throw ValidationError(os.str());
        }
      }
    }
  }
}

namespace {

struct OutcomeRow {
  std::string patient_id;
  int visit;
  std::string arm_label;
  double value;
  std::size_t lineno;
};

}  // namespace

TrialDataset load_dataset(const std::string& outcome_path,
                          const std::string& covariate_path) {
  const csv::Table cov = csv::read_file(covariate_path);
  if (cov.header.empty() || cov.header[0] != "patient_id" ||
      cov.header.size() < 2) {
    throw ValidationError(covariate_path +
                          ": header must be patient_id,<cov_1>,...");
  }
  const int d = static_cast<int>(cov.header.size()) - 1;
  const int n = static_cast<int>(cov.rows.size());
  if (n == 0) throw ValidationError(covariate_path + ": no patients");

  TrialDataset ds;
  ds.n_patients = n;
  ds.n_covariates = d;
  ds.covariate_labels.assign(cov.header.begin() + 1, cov.header.end());
  ds.covariates.resize(n, d);
  std::map<std::string, int> patient_index;
  for (int i = 0; i < n; ++i) {
    const auto& row = cov.rows[i];
    if (!patient_index.emplace(row[0], i).second) {
      throw ValidationError(covariate_path + ": duplicate patient_id '" +
                            row[0] + "'");
    }
    ds.patient_ids.push_back(row[0]);
    for (int c = 0; c < d; ++c) {
      ds.covariates(i, c) = csv::parse_double(
          row[c + 1], covariate_path + " row for " + row[0]);
    }
  }

  const csv::Table out = csv::read_file(outcome_path);
  const std::vector<std::string> expected = {"patient_id", "visit", "arm",
                                             "value"};
  if (out.header != expected) {
    throw ValidationError(outcome_path +
                          ": header must be exactly patient_id,visit,arm,value");
  }
  std::vector<OutcomeRow> rows;
  rows.reserve(out.rows.size());
  int max_visit = 0;
  std::map<std::string, int> arm_index;
  std::vector<std::string> arm_labels;
  for (std::size_t r = 0; r < out.rows.size(); ++r) {
    const auto& f = out.rows[r];
    std::ostringstream ctx;
    ctx << outcome_path << ":" << (r + 2);
    OutcomeRow row;
    row.patient_id = f[0];
    row.visit = static_cast<int>(csv::parse_long(f[1], ctx.str()));
    row.arm_label = f[2];
    row.value = csv::parse_double(f[3], ctx.str());
    row.lineno = r + 2;
    if (row.visit < 1) {
      throw ValidationError(ctx.str() + ": visit numbers are 1-based");
    }
    if (!patient_index.count(row.patient_id)) {
      throw ValidationError(ctx.str() + ": unknown patient '" +
                            row.patient_id + "' (no covariate row)");
    }
    if (arm_index.emplace(row.arm_label, arm_labels.size()).second) {
      arm_labels.push_back(row.arm_label);
    }
    max_visit = std::max(max_visit, row.visit);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ValidationError(outcome_path + ": no outcome rows");

  ds.n_visits = max_visit;
  ds.n_arms = static_cast<int>(arm_labels.size());
  ds.arm_labels = arm_labels;
  ds.outcome_values.assign(
      static_cast<std::size_t>(n) * ds.n_visits * ds.n_arms, 0.0);
  ds.outcome_present.assign(ds.outcome_values.size(), 0);
  ds.arm_assignment.assign(n, kNoArm);
  ds.dropout.assign(static_cast<std::size_t>(n) * ds.n_visits, 0);

  for (const auto& row : rows) {
    const int i = patient_index[row.patient_id];
    const int a = arm_index[row.arm_label];
    std::ostringstream ctx;
    ctx << outcome_path << ":" << row.lineno;
    if (ds.arm_assignment[i] == kNoArm) {
      ds.arm_assignment[i] = a;
    } else if (ds.arm_assignment[i] != a) {
      throw ValidationError(ctx.str() + ": patient '" + row.patient_id +
                            "' observed under two arms");
    }
    const auto idx = ds.cell(i, row.visit, a);
    if (ds.outcome_present[idx]) {
      throw ValidationError(ctx.str() + ": duplicate (patient,visit,arm) row");
    }
    ds.outcome_present[idx] = 1;
    ds.outcome_values[idx] = row.value;
  }

  // Reconstruct dropout indicators; observed visits must form a prefix.
  for (int i = 0; i < n; ++i) {
    const int a = ds.arm_assignment[i];
    int last_observed = 0;
    if (a != kNoArm) {
      for (int t = ds.n_visits; t >= 1; --t) {
        if (ds.observed(i, t, a)) {
          last_observed = t;
          break;
        }
      }
      for (int t = 1; t <= last_observed; ++t) {
        if (!ds.observed(i, t, a)) {
          std::ostringstream os;
          os << outcome_path << ": patient '" << ds.patient_ids[i]
             << "' missing visit " << t << " but observed at visit "
             << last_observed << " (non-absorbing dropout pattern)";
          throw ValidationError(os.str());
        }
      }
    }
    for (int t = last_observed + 1; t <= ds.n_visits; ++t) {
      ds.dropout[static_cast<std::size_t>(i) * ds.n_visits + t - 1] = 1;
    }
  }

  ds.validate();
  return ds;
}

void write_dataset(const TrialDataset& ds, const std::string& outcome_path,
                   const std::string& covariate_path) {
  csv::Table out;
  out.header = {"patient_id", "visit", "arm", "value"};
  for (int i = 0; i < ds.n_patients; ++i) {
    const int a = ds.arm_assignment[i];
    if (a == kNoArm) continue;
    for (int t = 1; t <= ds.n_visits; ++t) {
      if (!ds.observed(i, t, a)) continue;
      out.rows.push_back({ds.patient_ids[i], std::to_string(t),
                          ds.arm_labels[a],
                          csv::format_double(ds.outcome(i, t, a))});
    }
  }
  csv::write_file(outcome_path, out);

  csv::Table cov;
  cov.header.push_back("patient_id");
  for (const auto& label : ds.covariate_labels) cov.header.push_back(label);
  for (int i = 0; i < ds.n_patients; ++i) {
    std::vector<std::string> row{ds.patient_ids[i]};
    for (int c = 0; c < ds.n_covariates; ++c) {
      row.push_back(csv::format_double(ds.covariates(i, c)));
    }
    cov.rows.push_back(std::move(row));
  }
  csv::write_file(covariate_path, cov);
}

std::vector<int> donor_set(const TrialDataset& ds, int visit, int arm) {
  if (visit < 1 || visit > ds.n_visits || arm < 0 || arm >= ds.n_arms) {
    throw ValidationError("donor_set: index out of range");
  }
  std::vector<int> donors;
  for (int j = 0; j < ds.n_patients; ++j) {
    if (ds.observed(j, visit, arm)) donors.push_back(j);
  }
  return donors;
}

std::vector<int> observed_visits(const TrialDataset& ds, int patient, int arm,
                                 int before) {
  if (patient < 0 || patient >= ds.n_patients || arm < 0 ||
      arm >= ds.n_arms || before < 1 || before > ds.n_visits) {
    throw ValidationError("observed_visits: index out of range");
  }
  std::vector<int> visits;
  for (int t = 1; t < before; ++t) {
    if (ds.observed(patient, t, arm)) visits.push_back(t);
  }
  return visits;
}

FeatureVector feature_vector(const TrialDataset& ds, int patient,
                             const std::vector<int>& visit_set, int arm) {
  if (patient < 0 || patient >= ds.n_patients || arm < 0 || arm >= ds.n_arms) {
    throw ValidationError("feature_vector: index out of range");
  }
  FeatureVector fv;
  fv.visit_set = visit_set;
  std::sort(fv.visit_set.begin(), fv.visit_set.end());
  fv.values.resize(ds.n_covariates + static_cast<int>(fv.visit_set.size()));
  for (int c = 0; c < ds.n_covariates; ++c) {
    fv.values[c] = ds.covariates(patient, c);
  }
  int k = ds.n_covariates;
  for (int t : fv.visit_set) {
    if (t < 1 || t > ds.n_visits || !ds.observed(patient, t, arm)) {
      std::ostringstream os;
      os << "feature_vector: visit " << t << " not observed for patient "
         << ds.patient_ids[patient];
      throw ValidationError(os.str());
    }
    fv.values[k++] = ds.outcome(patient, t, arm);
  }
  return fv;
}

}  // namespace snn
