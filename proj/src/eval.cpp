#include "snn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "snn/errors.hpp"

namespace snn {

const char* estimator_name(EstimatorKind e) {
  switch (e) {
    case EstimatorKind::kSnn:
      return "snn";
    case EstimatorKind::kNaive:
      return "naive";
    case EstimatorKind::kLocf:
      return "locf";
    case EstimatorKind::kMatching:
      return "matching";
  }
  return "?";
}

EstimatorKind estimator_from_name(const std::string& name) {
  if (name == "snn") return EstimatorKind::kSnn;
  if (name == "naive") return EstimatorKind::kNaive;
  if (name == "locf") return EstimatorKind::kLocf;
  if (name == "matching") return EstimatorKind::kMatching;
  throw ValidationError("unknown estimator: '" + name +
                        "' (expected snn|naive|locf|matching)");
}

int StudyConfig::resolved_eval_visit(const TrialDataset& ds) const {
  const int v = eval_visit.value_or(ds.n_visits);
  if (v < 1 || v > ds.n_visits) {
    throw ValidationError("study: eval_visit out of range");
  }
  return v;
}

int StudyConfig::resolved_baseline(const TrialDataset& ds) const {
  if (baseline_covariate >= 0) {
    if (baseline_covariate >= ds.n_covariates) {
      throw ValidationError("study: baseline covariate out of range");
    }
    return baseline_covariate;
  }
  for (int c = 0; c < ds.n_covariates; ++c) {
    if (ds.covariate_labels[c] == "baseline_adascog") return c;
  }
  throw ValidationError(
      "study: no covariate labeled baseline_adascog; set baseline_covariate");
}

double nmse(const std::vector<double>& truth,
            const std::vector<double>& predictions) {
  if (truth.empty() || truth.size() != predictions.size()) {
    throw ValidationError("nmse: vectors must be nonempty and equal length");
  }
  double num = 0.0, denom = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double e = truth[i] - predictions[i];
    num += e * e;
    denom += truth[i] * truth[i];
  }
  if (denom <= 0.0) throw ValidationError("nmse: zero denominator");
  return num / denom;
}

DiagnosticsSplit split_by_diagnostics(
    const std::vector<SnnPrediction>& predictions,
    const std::vector<double>& truth) {
  if (predictions.size() != truth.size()) {
    throw ValidationError("split_by_diagnostics: length mismatch");
  }
  std::vector<double> pt, pp, ft, fp;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].passed) {
      pt.push_back(truth[i]);
      pp.push_back(predictions[i].estimate);
    } else {
      ft.push_back(truth[i]);
      fp.push_back(predictions[i].estimate);
    }
  }
  DiagnosticsSplit split;
  split.n_passed = static_cast<int>(pt.size());
  split.n_failed = static_cast<int>(ft.size());
  if (!pt.empty()) split.passed_nmse = nmse(pt, pp);
  if (!ft.empty()) split.failed_nmse = nmse(ft, fp);
  return split;
}

namespace {

TupleRecord snn_tuple(const SnnPrediction& pred, const TrialDataset& ds) {
  TupleRecord rec;
  rec.patient = pred.target.patient;
  rec.patient_id = ds.patient_ids[pred.target.patient];
  rec.visit = pred.target.visit;
  rec.arm = pred.target.arm;
  rec.arm_label = ds.arm_labels[pred.target.arm];
  rec.estimator = "snn";
  rec.estimate = pred.estimate;
  rec.passed = pred.passed;
  rec.lower = pred.lower;
  rec.upper = pred.upper;
  rec.interval_kind = pred.interval_kind;
  rec.theta_max = pred.theta_max();
  rec.phi_max = pred.phi_max();
  rec.n_retained = static_cast<int>(pred.retained.size());
  rec.n_models = static_cast<int>(pred.per_model.size());
  return rec;
}

SnnConfig snn_config_for(const StudyConfig& config, int repeat_index,
                         std::uint64_t stream) {
  SnnConfig cfg = config.snn;
  cfg.seed = derive_seed({config.snn.seed,
                          config.seed + static_cast<std::uint64_t>(repeat_index),
                          stream});
  return cfg;
}

}  // namespace

StudyReport run_dropout_study(const TrialDataset& complete,
                              const StudyConfig& config) {
  if (config.n_repeats < 1) {
    throw ValidationError("study: n_repeats must be >= 1");
  }
  const int eval_visit = config.resolved_eval_visit(complete);
  const int baseline = config.resolved_baseline(complete);

  StudyReport report;
  report.study = "dropout";

  for (int rep = 0; rep < config.n_repeats; ++rep) {
    for (std::size_t mi = 0; mi < config.mechanisms.size(); ++mi) {
      const Mechanism mech = config.mechanisms[mi];
      Rng rng(config.seed + static_cast<std::uint64_t>(rep));
      const auto sim = simulate_dropouts(complete, mech, config.schedule,
                                         baseline, rng);
      const SnnConfig snn_cfg = snn_config_for(config, rep, mi);

      for (int a = 0; a < complete.n_arms; ++a) {
        const auto& dropouts = sim.dropout_sets[a];
        if (dropouts.empty()) continue;  // absent, not zero
        const std::vector<int> compliers =
            donor_set(sim.dataset, eval_visit, a);

        std::vector<double> truth;
        truth.reserve(dropouts.size());
        for (const auto& rec : dropouts) {
          truth.push_back(complete.outcome(rec.patient, eval_visit, a));
        }

        std::vector<SnnPrediction> snn_preds;
        for (EstimatorKind est : config.estimators) {
          std::vector<double> preds;
          preds.reserve(dropouts.size());
          for (const auto& drec : dropouts) {
            const TargetTuple target{drec.patient, eval_visit, a};
            TupleRecord trec;
            switch (est) {
              case EstimatorKind::kSnn: {
                auto pred = predict(sim.dataset, target, snn_cfg);
                trec = snn_tuple(pred, complete);
                snn_preds.push_back(std::move(pred));
                break;
              }
              case EstimatorKind::kNaive:
                trec.estimate = naive_predict(sim.dataset, eval_visit, a,
                                              compliers);
                break;
              case EstimatorKind::kLocf:
                trec.estimate =
                    locf_predict(sim.dataset, drec.patient, a, eval_visit);
                break;
              case EstimatorKind::kMatching:
                trec.estimate = matching_predict(sim.dataset, target,
                                                 compliers, config.matching);
                break;
            }
            trec.repeat_index = rep;
            trec.mechanism = mechanism_name(mech);
            trec.patient = drec.patient;
            trec.patient_id = complete.patient_ids[drec.patient];
            trec.visit = eval_visit;
            trec.arm = a;
            trec.arm_label = complete.arm_labels[a];
            trec.estimator = estimator_name(est);
            trec.truth = complete.outcome(drec.patient, eval_visit, a);
            preds.push_back(trec.estimate);
            report.tuples.push_back(std::move(trec));
          }
          report.rows.push_back({rep, mechanism_name(mech),
                                 complete.arm_labels[a], estimator_name(est),
                                 nmse(truth, preds)});
        }

        if (!snn_preds.empty()) {
          const auto split = split_by_diagnostics(snn_preds, truth);
          report.diagnostics_split.push_back(
              {rep, mechanism_name(mech), complete.arm_labels[a],
               split.passed_nmse, split.failed_nmse, split.n_passed,
               split.n_failed});
        }

        // Optional trajectory sweep: every post-withdrawal visit.
        if (config.eval_all_visits) {
          for (const auto& drec : dropouts) {
            for (int t = drec.first_missing_visit; t <= complete.n_visits;
                 ++t) {
              if (t == eval_visit) continue;
              const TargetTuple target{drec.patient, t, a};
              auto pred = predict(sim.dataset, target, snn_cfg);
              TupleRecord trec = snn_tuple(pred, complete);
              trec.repeat_index = rep;
              trec.mechanism = mechanism_name(mech);
              trec.truth = complete.outcome(drec.patient, t, a);
              report.tuples.push_back(std::move(trec));
            }
          }
        }
      }
    }
  }
  return report;
}

StudyReport run_synthetic_rct_study(const TrialDataset& complete,
                                    const StudyConfig& config) {
  if (config.n_repeats < 1) {
    throw ValidationError("study: n_repeats must be >= 1");
  }
  const int eval_visit = config.resolved_eval_visit(complete);

  StudyReport report;
  report.study = "synthetic-rct";

  std::vector<std::vector<int>> arm_patients(complete.n_arms);
  for (int i = 0; i < complete.n_patients; ++i) {
    const int a = complete.arm_assignment[i];
    if (a != kNoArm) arm_patients[a].push_back(i);
  }
  for (int a = 0; a < complete.n_arms; ++a) {
    if (arm_patients[a].size() < 2) {
      throw ValidationError("synthetic-rct: arm " + complete.arm_labels[a] +
                            " has fewer than 2 patients");
    }
  }

  for (int rep = 0; rep < config.n_repeats; ++rep) {
    Rng rng(config.seed + static_cast<std::uint64_t>(rep));
    TrialDataset masked = complete;
    std::vector<std::vector<int>> test_sets(complete.n_arms);
    for (int a = 0; a < complete.n_arms; ++a) {
      std::vector<int> pool = arm_patients[a];
      rng.shuffle(pool);
      const int n_test = static_cast<int>(pool.size()) / 2;
      test_sets[a].assign(pool.begin(), pool.begin() + n_test);
      std::sort(test_sets[a].begin(), test_sets[a].end());
      for (int i : test_sets[a]) masked.clear_patient(i);
    }
    masked.validate();
    const SnnConfig snn_cfg = snn_config_for(config, rep, 0x5ec7);

    for (int a = 0; a < complete.n_arms; ++a) {
      const auto& test = test_sets[a];
      if (test.empty()) continue;
      const std::vector<int> compliers = donor_set(masked, eval_visit, a);

      std::vector<double> truth;
      truth.reserve(test.size());
      for (int i : test) truth.push_back(complete.outcome(i, eval_visit, a));

      std::vector<SnnPrediction> snn_preds;
      for (EstimatorKind est : config.estimators) {
        if (est == EstimatorKind::kLocf) continue;  // nothing to carry forward
        std::vector<double> preds;
        preds.reserve(test.size());
        for (int i : test) {
          const TargetTuple target{i, eval_visit, a};
          TupleRecord trec;
          switch (est) {
            case EstimatorKind::kSnn: {
              auto pred = predict(masked, target, snn_cfg);
              trec = snn_tuple(pred, complete);
              snn_preds.push_back(std::move(pred));
              break;
            }
            case EstimatorKind::kNaive:
              trec.estimate = naive_predict(masked, eval_visit, a, compliers);
              break;
            case EstimatorKind::kMatching:
              trec.estimate =
                  matching_predict(masked, target, compliers, config.matching);
              break;
            case EstimatorKind::kLocf:
              break;
          }
          trec.repeat_index = rep;
          trec.mechanism = "none";
          trec.patient = i;
          trec.patient_id = complete.patient_ids[i];
          trec.visit = eval_visit;
          trec.arm = a;
          trec.arm_label = complete.arm_labels[a];
          trec.estimator = estimator_name(est);
          trec.truth = complete.outcome(i, eval_visit, a);
          preds.push_back(trec.estimate);
          report.tuples.push_back(std::move(trec));
        }
        report.rows.push_back({rep, "none", complete.arm_labels[a],
                               estimator_name(est), nmse(truth, preds)});
      }

      if (!snn_preds.empty()) {
        const auto split = split_by_diagnostics(snn_preds, truth);
        report.diagnostics_split.push_back(
            {rep, "none", complete.arm_labels[a], split.passed_nmse,
             split.failed_nmse, split.n_passed, split.n_failed});
      }
    }
  }
  return report;
}

std::optional<ImprovementSummary> snn_improvement(const StudyReport& report) {
  std::map<std::string, std::pair<double, int>> sums;
  for (const auto& row : report.rows) {
    auto& acc = sums[row.estimator];
    acc.first += row.nmse;
    acc.second += 1;
  }
  const auto snn_it = sums.find("snn");
  if (snn_it == sums.end()) return std::nullopt;
  const double snn_mean = snn_it->second.first / snn_it->second.second;
  std::optional<ImprovementSummary> best;
  for (const auto& [name, acc] : sums) {
    if (name == "snn") continue;
    const double mean = acc.first / acc.second;
    if (!best || mean < best->improvement) {
      // improvement temporarily holds the candidate mean
      best = ImprovementSummary{name, mean};
    }
  }
  if (!best || best->improvement <= 0.0) return std::nullopt;
  best->improvement = 1.0 - snn_mean / best->improvement;
  return best;
}

}  // namespace snn
