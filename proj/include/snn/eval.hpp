#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "snn/baselines.hpp"
#include "snn/dgp.hpp"
#include "snn/estimator.hpp"
#include "snn/trial_data.hpp"

namespace snn {

enum class EstimatorKind { kSnn, kNaive, kLocf, kMatching };

const char* estimator_name(EstimatorKind e);
EstimatorKind estimator_from_name(const std::string& name);

struct StudyConfig {
  int n_repeats = 10;
  std::vector<Mechanism> mechanisms = {Mechanism::kMcar, Mechanism::kMar,
                                       Mechanism::kMnar};
  std::vector<EstimatorKind> estimators = {
      EstimatorKind::kSnn, EstimatorKind::kNaive, EstimatorKind::kLocf,
      EstimatorKind::kMatching};
  SnnConfig snn;
  MatchingConfig matching;
  DropoutRateSchedule schedule = DropoutRateSchedule::standard();
  std::optional<int> eval_visit;  // default: final visit
  // When set, dropout-study predictions cover every post-withdrawal
  // visit (trajectory output); accuracy rows still use eval_visit.
  bool eval_all_visits = false;
  // Covariate column holding the pre-trial baseline outcome; -1 picks
  // the column labeled baseline_adascog.
  int baseline_covariate = -1;
  std::uint64_t seed = 0;

  int resolved_eval_visit(const TrialDataset& ds) const;
  int resolved_baseline(const TrialDataset& ds) const;
};

struct ReportRow {
  int repeat_index = 0;
  std::string mechanism;  // "none" for the synthetic-RCT study
  std::string arm;
  std::string estimator;
  double nmse = 0.0;
};

struct DiagnosticsSplitRow {
  int repeat_index = 0;
  std::string mechanism;
  std::string arm;
  std::optional<double> passed_nmse;
  std::optional<double> failed_nmse;
  int n_passed = 0;
  int n_failed = 0;
};

struct TupleRecord {
  int repeat_index = 0;
  std::string mechanism;
  int patient = 0;
  std::string patient_id;
  int visit = 0;
  int arm = 0;
  std::string arm_label;
  std::string estimator;
  double estimate = 0.0;
  double truth = 0.0;
  // SNN-only fields (defaults elsewhere)
  bool passed = false;
  double lower = std::numeric_limits<double>::quiet_NaN();
  double upper = std::numeric_limits<double>::quiet_NaN();
  IntervalKind interval_kind = IntervalKind::kNone;
  double theta_max = std::numeric_limits<double>::quiet_NaN();
  double phi_max = std::numeric_limits<double>::quiet_NaN();
  int n_retained = 0;
  int n_models = 0;
};

struct StudyReport {
  std::string study;  // "dropout" or "synthetic-rct"
  std::vector<ReportRow> rows;
  std::vector<DiagnosticsSplitRow> diagnostics_split;
  std::vector<TupleRecord> tuples;
};

// NMSE = sum (truth - prediction)^2 / sum truth^2.
double nmse(const std::vector<double>& truth,
            const std::vector<double>& predictions);

struct DiagnosticsSplit {
  std::optional<double> passed_nmse;
  std::optional<double> failed_nmse;
  int n_passed = 0;
  int n_failed = 0;
};

DiagnosticsSplit split_by_diagnostics(
    const std::vector<SnnPrediction>& predictions,
    const std::vector<double>& truth);

// Simulates dropouts on a fully observed trial and scores every enabled
// estimator on each withdrawn patient's eval-visit outcome, per repeat
// and mechanism.
StudyReport run_dropout_study(const TrialDataset& complete,
                              const StudyConfig& config);

// Withholds half of each arm's outcomes and recreates them from
// pretreatment variables alone (LOCF excluded).
StudyReport run_synthetic_rct_study(const TrialDataset& complete,
                                    const StudyConfig& config);

// 1 - mean(NMSE_SNN) / mean(NMSE_next_best) over all report cells;
// the next-best estimator is the non-SNN estimator with the lowest
// mean NMSE. Absent when the report lacks SNN or baseline rows.
struct ImprovementSummary {
  std::string next_best;
  double improvement = 0.0;
};
std::optional<ImprovementSummary> snn_improvement(const StudyReport& report);

}  // namespace snn
