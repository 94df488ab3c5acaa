#include "snn/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>

#include "snn/baselines.hpp"
#include "snn/csv.hpp"
#include "snn/dgp.hpp"
#include "snn/errors.hpp"
#include "snn/estimator.hpp"
#include "snn/eval.hpp"
#include "snn/spectra.hpp"
#include "snn/trial_data.hpp"

namespace snn::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kSchemaVersion = "1";

json make_default_config() {
  return json{
      {"seed", 0},
      {"io",
       {{"outcomes", ""}, {"covariates", ""}, {"out", ""}, {"format", "csv"}}},
      {"generator",
       {{"patients", 200},
        {"visits", 5},
        {"arms", 3},
        {"covariates", 4},
        {"rank", 2},
        {"outcome_noise", 0.0},
        {"covariate_noise", 0.0},
        {"factor_distribution", "uniform"}}},
      {"snn",
       {{"n_subgroups", 5},
        {"alpha", 0.2},
        {"rank_mode", "universal"},
        {"fixed_rank", 2},
        {"energy_fraction", 0.99},
        {"min_subgroup_size", nullptr},
        {"z_ci", 1.96},
        {"noise_sqrt_denominator", false}}},
      {"matching", {{"n_neighbors", 5}}},
      {"schedule", {{"rates", {0.10, 0.08, 0.06, 0.04}}}},
      {"study",
       {{"repeats", 10},
        {"mechanisms", {"mcar", "mar", "mnar"}},
        {"estimators", {"snn", "naive", "locf", "matching"}},
        {"studies", {"dropout", "synthetic-rct"}},
        {"eval_visit", nullptr},
        {"eval_all_visits", false},
        {"baseline_covariate", "baseline_adascog"},
        {"trajectories", false}}},
      {"spectrum", {{"top", 9}}},
  };
}

void validate_keys(const json& user, const json& schema,
                   const std::string& path) {
  if (!user.is_object()) {
    throw ValidationError("config: expected an object at " +
                          (path.empty() ? std::string("top level") : path));
  }
  for (const auto& [key, value] : user.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!schema.contains(key)) {
      throw ValidationError("config: unknown key '" + here + "'");
    }
    if (schema[key].is_object()) validate_keys(value, schema[key], here);
  }
}

void deep_merge(json& base, const json& overlay) {
  for (const auto& [key, value] : overlay.items()) {
    if (value.is_object() && base.contains(key) && base[key].is_object()) {
      deep_merge(base[key], value);
    } else {
      base[key] = value;
    }
  }
}

double as_double(const json& j, const std::string& key) {
  if (!j.is_number()) throw ValidationError("config: '" + key + "' must be a number");
  return j.get<double>();
}

int as_int(const json& j, const std::string& key) {
  if (!j.is_number_integer()) {
    throw ValidationError("config: '" + key + "' must be an integer");
  }
  return j.get<int>();
}

spectra::RankSelection rank_mode_from(const json& snn_cfg) {
  const std::string mode = snn_cfg.at("rank_mode").get<std::string>();
  if (mode == "universal") return spectra::RankSelection::universal();
  if (mode == "fixed") {
    return spectra::RankSelection::fixed(
        as_int(snn_cfg.at("fixed_rank"), "snn.fixed_rank"));
  }
  if (mode == "energy") {
    return spectra::RankSelection::energy(
        as_double(snn_cfg.at("energy_fraction"), "snn.energy_fraction"));
  }
  throw ValidationError("config: snn.rank_mode must be universal|fixed|energy");
}

SnnConfig snn_config_from(const json& cfg) {
  const json& s = cfg.at("snn");
  SnnConfig out;
  out.n_subgroups = as_int(s.at("n_subgroups"), "snn.n_subgroups");
  out.alpha = as_double(s.at("alpha"), "snn.alpha");
  out.rank_mode = rank_mode_from(s);
  if (!s.at("min_subgroup_size").is_null()) {
    out.min_subgroup_size =
        as_int(s.at("min_subgroup_size"), "snn.min_subgroup_size");
  }
  out.z_ci = as_double(s.at("z_ci"), "snn.z_ci");
  out.noise_sqrt_denominator = s.at("noise_sqrt_denominator").get<bool>();
  out.seed = cfg.at("seed").get<std::uint64_t>();
  out.validate();
  return out;
}

MatchingConfig matching_config_from(const json& cfg) {
  MatchingConfig out;
  out.n_neighbors =
      as_int(cfg.at("matching").at("n_neighbors"), "matching.n_neighbors");
  out.validate();
  return out;
}

DropoutRateSchedule schedule_from(const json& cfg) {
  DropoutRateSchedule sched;
  for (const auto& r : cfg.at("schedule").at("rates")) {
    sched.rates.push_back(as_double(r, "schedule.rates"));
  }
  return sched;
}

int resolve_baseline(const TrialDataset& ds, const json& value) {
  if (value.is_number_integer()) {
    const int idx = value.get<int>();
    if (idx < 0 || idx >= ds.n_covariates) {
      throw ValidationError("config: baseline_covariate index out of range");
    }
    return idx;
  }
  if (value.is_string()) {
    const std::string label = value.get<std::string>();
    for (int c = 0; c < ds.n_covariates; ++c) {
      if (ds.covariate_labels[c] == label) return c;
    }
    throw ValidationError("config: no covariate labeled '" + label + "'");
  }
  throw ValidationError(
      "config: baseline_covariate must be a column label or index");
}

StudyConfig study_config_from(const json& cfg, const TrialDataset& ds) {
  const json& s = cfg.at("study");
  StudyConfig out;
  out.n_repeats = as_int(s.at("repeats"), "study.repeats");
  out.mechanisms.clear();
  for (const auto& m : s.at("mechanisms")) {
    out.mechanisms.push_back(mechanism_from_name(m.get<std::string>()));
  }
  out.estimators.clear();
  for (const auto& e : s.at("estimators")) {
    out.estimators.push_back(estimator_from_name(e.get<std::string>()));
  }
  out.snn = snn_config_from(cfg);
  out.matching = matching_config_from(cfg);
  out.schedule = schedule_from(cfg);
  if (!s.at("eval_visit").is_null()) {
    out.eval_visit = as_int(s.at("eval_visit"), "study.eval_visit");
  }
  out.eval_all_visits = s.at("eval_all_visits").get<bool>();
  if (s.at("trajectories").get<bool>()) out.eval_all_visits = true;
  out.baseline_covariate = resolve_baseline(ds, s.at("baseline_covariate"));
  out.seed = cfg.at("seed").get<std::uint64_t>();
  return out;
}

// Tracks files written by one command so a failure leaves no partial
// outputs behind.
class Outputs {
 public:
  explicit Outputs(const std::string& dir) : dir_(dir) {
    if (dir.empty()) {
      throw ValidationError("an output directory is required (--out)");
    }
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory: " + dir);
  }

  std::string path(const std::string& name) {
    files_.push_back(dir_ / name);
    return (dir_ / name).string();
  }

  void discard_all() {
    for (const auto& f : files_) {
      std::error_code ec;
      fs::remove(f, ec);
    }
  }

 private:
  fs::path dir_;
  std::vector<fs::path> files_;
};

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open file for writing: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

// Removes everything already written when a later step fails.
template <typename Fn>
void with_cleanup(Outputs& outputs, Fn&& fn) {
  try {
    fn();
  } catch (...) {
    outputs.discard_all();
    throw;
  }
}

void write_config_echo(Outputs& outputs, const std::string& command,
                       const json& cfg) {
  json echo{{"schema_version", kSchemaVersion},
            {"command", command},
            {"config", cfg}};
  write_json_file(outputs.path("config_echo.json"), echo);
}

TrialDataset load_input(const json& cfg) {
  const std::string outcomes = cfg.at("io").at("outcomes").get<std::string>();
  const std::string covariates =
      cfg.at("io").at("covariates").get<std::string>();
  if (outcomes.empty() || covariates.empty()) {
    throw ValidationError(
        "input files are required (--outcomes and --covariates)");
  }
  return load_dataset(outcomes, covariates);
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

std::string opt_str(double v) {
  return std::isfinite(v) ? csv::format_double(v) : std::string();
}

// ---------------------------------------------------------------------------
// simulate

int cmd_simulate(const json& cfg) {
  const json& g = cfg.at("generator");
  Rng rng(cfg.at("seed").get<std::uint64_t>());
  const auto model = LatentFactorModel::sample(
      as_int(g.at("patients"), "generator.patients"),
      as_int(g.at("visits"), "generator.visits"),
      as_int(g.at("arms"), "generator.arms"),
      as_int(g.at("covariates"), "generator.covariates"),
      as_int(g.at("rank"), "generator.rank"),
      factor_distribution_from_name(
          g.at("factor_distribution").get<std::string>()),
      as_double(g.at("outcome_noise"), "generator.outcome_noise"),
      as_double(g.at("covariate_noise"), "generator.covariate_noise"), rng);
  const auto trial = generate_trial(model, rng);

  Outputs outputs(cfg.at("io").at("out").get<std::string>());
  with_cleanup(outputs, [&] {
    write_dataset(trial.dataset, outputs.path("outcomes.csv"),
                  outputs.path("covariates.csv"));

    csv::Table gt;
    gt.header = {"patient_id", "visit", "arm", "mean_outcome"};
    for (int i = 0; i < trial.dataset.n_patients; ++i) {
      for (int t = 1; t <= trial.dataset.n_visits; ++t) {
        for (int a = 0; a < trial.dataset.n_arms; ++a) {
          gt.rows.push_back(
              {trial.dataset.patient_ids[i], std::to_string(t),
               trial.dataset.arm_labels[a],
               csv::format_double(trial.ground_truth.at(i, t, a))});
        }
      }
    }
    csv::write_file(outputs.path("ground_truth.csv"), gt);
    write_config_echo(outputs, "simulate", cfg);
  });
  return 0;
}

// ---------------------------------------------------------------------------
// dropout-sim

int cmd_dropout_sim(const json& cfg) {
  const TrialDataset ds = load_input(cfg);
  const auto mechanisms = cfg.at("study").at("mechanisms");
  if (mechanisms.empty()) {
    throw ValidationError("dropout-sim: a mechanism is required");
  }
  const Mechanism mech =
      mechanism_from_name(mechanisms.at(0).get<std::string>());
  const auto schedule = schedule_from(cfg);
  const int baseline =
      resolve_baseline(ds, cfg.at("study").at("baseline_covariate"));

  Rng rng(cfg.at("seed").get<std::uint64_t>());
  const auto sim = simulate_dropouts(ds, mech, schedule, baseline, rng);

  Outputs outputs(cfg.at("io").at("out").get<std::string>());
  with_cleanup(outputs, [&] {
    write_dataset(sim.dataset, outputs.path("outcomes.csv"),
                  outputs.path("covariates.csv"));

    csv::Table drops;
    drops.header = {"patient_id", "arm", "first_missing_visit", "mechanism"};
    for (int a = 0; a < ds.n_arms; ++a) {
      for (const auto& rec : sim.dropout_sets[a]) {
        drops.rows.push_back({ds.patient_ids[rec.patient], ds.arm_labels[a],
                              std::to_string(rec.first_missing_visit),
                              mechanism_name(mech)});
      }
    }
    csv::write_file(outputs.path("dropouts.csv"), drops);
    write_config_echo(outputs, "dropout-sim", cfg);
  });
  return 0;
}

// ---------------------------------------------------------------------------
// impute

struct PredictionRow {
  std::string patient_id;
  int visit = 0;
  std::string arm;
  double estimate = 0.0;
  double lower = std::numeric_limits<double>::quiet_NaN();
  double upper = std::numeric_limits<double>::quiet_NaN();
  std::string interval_kind = "none";
  std::optional<bool> passed;
  double theta_max = std::numeric_limits<double>::quiet_NaN();
  double phi_max = std::numeric_limits<double>::quiet_NaN();
  std::optional<int> n_retained;
};

void write_predictions(Outputs& outputs, const std::string& format,
                       const std::vector<PredictionRow>& rows,
                       const std::optional<std::string>& estimator_column) {
  if (format == "json") {
    json arr = json::array();
    for (const auto& r : rows) {
      json o{{"patient_id", r.patient_id}, {"visit", r.visit},
             {"arm", r.arm},               {"estimate", r.estimate},
             {"lower", nullptr},           {"upper", nullptr},
             {"interval_kind", r.interval_kind}};
      if (std::isfinite(r.lower)) o["lower"] = r.lower;
      if (std::isfinite(r.upper)) o["upper"] = r.upper;
      if (r.passed) o["passed"] = *r.passed;
      if (std::isfinite(r.theta_max)) o["theta_max"] = r.theta_max;
      if (std::isfinite(r.phi_max)) o["phi_max"] = r.phi_max;
      if (r.n_retained) o["n_retained"] = *r.n_retained;
      if (estimator_column) o["estimator"] = *estimator_column;
      arr.push_back(std::move(o));
    }
    write_json_file(outputs.path("predictions.json"), arr);
    return;
  }
  csv::Table table;
  table.header = {"patient_id", "visit",         "arm",
                  "estimate",   "lower",         "upper",
                  "interval_kind", "passed",     "theta_max",
                  "phi_max",    "n_retained"};
  if (estimator_column) table.header.push_back("estimator");
  for (const auto& r : rows) {
    std::vector<std::string> row{
        r.patient_id,
        std::to_string(r.visit),
        r.arm,
        csv::format_double(r.estimate),
        opt_str(r.lower),
        opt_str(r.upper),
        r.interval_kind,
        r.passed ? bool_str(*r.passed) : std::string(),
        opt_str(r.theta_max),
        opt_str(r.phi_max),
        r.n_retained ? std::to_string(*r.n_retained) : std::string()};
    if (estimator_column) row.push_back(*estimator_column);
    table.rows.push_back(std::move(row));
  }
  csv::write_file(outputs.path("predictions.csv"), table);
}

int cmd_impute(const json& cfg) {
  const TrialDataset ds = load_input(cfg);
  const auto estimators = cfg.at("study").at("estimators");
  if (estimators.empty()) {
    throw ValidationError("impute: an estimator is required");
  }
  const EstimatorKind est =
      estimator_from_name(estimators.at(0).get<std::string>());
  const SnnConfig snn_cfg = snn_config_from(cfg);
  const MatchingConfig matching_cfg = matching_config_from(cfg);

  // Every missing (patient, visit) pair within the patient's own arm.
  std::vector<TargetTuple> targets;
  for (int i = 0; i < ds.n_patients; ++i) {
    const int a = ds.arm_assignment[i];
    if (a == kNoArm) continue;
    for (int t = 1; t <= ds.n_visits; ++t) {
      if (ds.dropped(i, t)) targets.push_back({i, t, a});
    }
  }

  int reduced_subgroups = 0;
  std::vector<PredictionRow> rows;
  rows.reserve(targets.size());
  for (const auto& target : targets) {
    PredictionRow row;
    row.patient_id = ds.patient_ids[target.patient];
    row.visit = target.visit;
    row.arm = ds.arm_labels[target.arm];
    switch (est) {
      case EstimatorKind::kSnn: {
        const auto pred = predict(ds, target, snn_cfg);
        row.estimate = pred.estimate;
        row.lower = pred.lower;
        row.upper = pred.upper;
        row.interval_kind = interval_kind_name(pred.interval_kind);
        row.passed = pred.passed;
        row.theta_max = pred.theta_max();
        row.phi_max = pred.phi_max();
        row.n_retained = static_cast<int>(pred.retained.size());
        if (static_cast<int>(pred.per_model.size()) < snn_cfg.n_subgroups) {
          ++reduced_subgroups;
        }
        break;
      }
      case EstimatorKind::kNaive:
        row.estimate = naive_predict(
            ds, target.visit, target.arm,
            donor_set(ds, target.visit, target.arm));
        break;
      case EstimatorKind::kLocf:
        row.estimate =
            locf_predict(ds, target.patient, target.arm, target.visit);
        break;
      case EstimatorKind::kMatching:
        row.estimate =
            matching_predict(ds, target,
                             donor_set(ds, target.visit, target.arm),
                             matching_cfg);
        break;
    }
    rows.push_back(std::move(row));
  }

  Outputs outputs(cfg.at("io").at("out").get<std::string>());
  const std::string format = cfg.at("io").at("format").get<std::string>();
  const std::optional<std::string> est_col =
      est == EstimatorKind::kSnn
          ? std::nullopt
          : std::optional<std::string>(estimator_name(est));
  with_cleanup(outputs, [&] {
    write_predictions(outputs, format, rows, est_col);
    write_config_echo(outputs, "impute", cfg);
  });
  if (reduced_subgroups > 0) {
    std::cerr << "note: subgroup count reduced below K for "
              << reduced_subgroups << " of " << rows.size() << " tuples\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// spectrum

int cmd_spectrum(const json& cfg) {
  const TrialDataset ds = load_input(cfg);
  const int top = as_int(cfg.at("spectrum").at("top"), "spectrum.top");
  if (top < 1) throw ValidationError("spectrum: top must be >= 1");

  csv::Table raw, standardized;
  raw.header = {"arm", "k", "cumulative_energy"};
  standardized.header = raw.header;
  for (int a = 0; a < ds.n_arms; ++a) {
    const auto compliers = donor_set(ds, ds.n_visits, a);
    if (compliers.empty()) {
      std::cerr << "note: arm " << ds.arm_labels[a]
                << " has no fully observed patients; skipped\n";
      continue;
    }
    const int m = static_cast<int>(compliers.size());
    const int p = ds.n_covariates + ds.n_visits;
    Eigen::MatrixXd z(m, p);
    std::vector<int> all_visits(ds.n_visits);
    for (int t = 0; t < ds.n_visits; ++t) all_visits[t] = t + 1;
    for (int r = 0; r < m; ++r) {
      z.row(r) = feature_vector(ds, compliers[r], all_visits, a).values;
    }
    const int k = std::min(top, std::min(m, p));
    const auto raw_profile = spectra::spectral_energy_profile(z, k);
    for (int j = 0; j < k; ++j) {
      raw.rows.push_back({ds.arm_labels[a], std::to_string(j + 1),
                          csv::format_double(raw_profile[j])});
    }
    if (m >= 2) {
      const auto std_profile = spectra::spectral_energy_profile(
          spectra::standardize_columns(z).first, k);
      for (int j = 0; j < k; ++j) {
        standardized.rows.push_back({ds.arm_labels[a], std::to_string(j + 1),
                                     csv::format_double(std_profile[j])});
      }
    }
  }

  Outputs outputs(cfg.at("io").at("out").get<std::string>());
  with_cleanup(outputs, [&] {
    csv::write_file(outputs.path("spectrum_raw.csv"), raw);
    csv::write_file(outputs.path("spectrum_standardized.csv"), standardized);
    write_config_echo(outputs, "spectrum", cfg);
  });
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate / synthetic-rct

json rows_to_json(const StudyReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back(json{{"repeat", r.repeat_index},
                        {"mechanism", r.mechanism},
                        {"arm", r.arm},
                        {"estimator", r.estimator},
                        {"nmse", r.nmse}});
  }
  return rows;
}

json split_to_json(const StudyReport& report) {
  json rows = json::array();
  for (const auto& r : report.diagnostics_split) {
    json o{{"repeat", r.repeat_index},
           {"mechanism", r.mechanism},
           {"arm", r.arm},
           {"passed_nmse", nullptr},
           {"failed_nmse", nullptr},
           {"n_passed", r.n_passed},
           {"n_failed", r.n_failed}};
    if (r.passed_nmse) o["passed_nmse"] = *r.passed_nmse;
    if (r.failed_nmse) o["failed_nmse"] = *r.failed_nmse;
    rows.push_back(std::move(o));
  }
  return rows;
}

void append_report_rows(csv::Table& table, csv::Table& split,
                        const StudyReport& report) {
  for (const auto& r : report.rows) {
    table.rows.push_back({report.study, std::to_string(r.repeat_index),
                          r.mechanism, r.arm, r.estimator,
                          csv::format_double(r.nmse)});
  }
  for (const auto& r : report.diagnostics_split) {
    split.rows.push_back(
        {report.study, std::to_string(r.repeat_index), r.mechanism, r.arm,
         r.passed_nmse ? csv::format_double(*r.passed_nmse) : std::string(),
         r.failed_nmse ? csv::format_double(*r.failed_nmse) : std::string(),
         std::to_string(r.n_passed), std::to_string(r.n_failed)});
  }
}

void write_trajectories(Outputs& outputs, const TrialDataset& complete,
                        const StudyReport& report) {
  // Representative repeat-0 SNN trajectories per mechanism.
  std::vector<std::string> mechanisms;
  for (const auto& t : report.tuples) {
    if (t.repeat_index != 0 || t.estimator != "snn") continue;
    if (std::find(mechanisms.begin(), mechanisms.end(), t.mechanism) ==
        mechanisms.end()) {
      mechanisms.push_back(t.mechanism);
    }
  }
  for (const auto& mech : mechanisms) {
    // (patient, visit) -> tuple record
    std::map<std::pair<int, int>, const TupleRecord*> by_cell;
    std::vector<int> patients;
    for (const auto& t : report.tuples) {
      if (t.repeat_index != 0 || t.estimator != "snn" || t.mechanism != mech) {
        continue;
      }
      by_cell[{t.patient, t.visit}] = &t;
      if (std::find(patients.begin(), patients.end(), t.patient) ==
          patients.end()) {
        patients.push_back(t.patient);
      }
    }
    std::sort(patients.begin(), patients.end());
    csv::Table table;
    table.header = {"patient_id", "visit", "observed",
                    "predicted",  "lower", "upper"};
    for (int i : patients) {
      const int a = complete.arm_assignment[i];
      for (int t = 1; t <= complete.n_visits; ++t) {
        std::vector<std::string> row{complete.patient_ids[i],
                                     std::to_string(t)};
        row.push_back(a != kNoArm && complete.observed(i, t, a)
                          ? csv::format_double(complete.outcome(i, t, a))
                          : std::string());
        const auto it = by_cell.find({i, t});
        if (it != by_cell.end()) {
          row.push_back(csv::format_double(it->second->estimate));
          row.push_back(opt_str(it->second->lower));
          row.push_back(opt_str(it->second->upper));
        } else {
          row.insert(row.end(), {"", "", ""});
        }
        table.rows.push_back(std::move(row));
      }
    }
    csv::write_file(outputs.path("trajectories_" + mech + ".csv"), table);
  }
}

void write_reports(Outputs& outputs, const json& cfg,
                   const std::string& command, const TrialDataset& ds,
                   const std::vector<StudyReport>& reports) {
  csv::Table table, split;
  table.header = {"study", "repeat", "mechanism", "arm", "estimator", "nmse"};
  split.header = {"study",       "repeat",      "mechanism", "arm",
                  "passed_nmse", "failed_nmse", "n_passed",  "n_failed"};
  json jstudies = json::array();
  for (const auto& report : reports) {
    append_report_rows(table, split, report);
    json js{{"study", report.study},
            {"improvement", nullptr},
            {"rows", rows_to_json(report)},
            {"diagnostics_split", split_to_json(report)}};
    if (const auto imp = snn_improvement(report)) {
      js["improvement"] = json{{"next_best", imp->next_best},
                               {"snn_vs_next_best", imp->improvement},
                               {"formula",
                                "1 - mean(nmse_snn)/mean(nmse_next_best) "
                                "over all report cells"}};
    }
    jstudies.push_back(std::move(js));
  }
  csv::write_file(outputs.path("report.csv"), table);
  csv::write_file(outputs.path("diagnostics_split.csv"), split);

  json jreport{{"schema_version", kSchemaVersion},
               {"command", command},
               {"seed", cfg.at("seed")},
               {"arm_labels", ds.arm_labels},
               {"covariate_labels", ds.covariate_labels},
               {"studies", std::move(jstudies)},
               {"config", cfg}};
  write_json_file(outputs.path("report.json"), jreport);
}

int cmd_synthetic_rct(const json& cfg) {
  const TrialDataset ds = load_input(cfg);
  const StudyConfig study = study_config_from(cfg, ds);
  const auto report = run_synthetic_rct_study(ds, study);
  Outputs outputs(cfg.at("io").at("out").get<std::string>());
  with_cleanup(outputs, [&] {
    write_reports(outputs, cfg, "synthetic-rct", ds, {report});
    write_config_echo(outputs, "synthetic-rct", cfg);
  });
  return 0;
}

int cmd_evaluate(const json& cfg) {
  const TrialDataset ds = load_input(cfg);
  const StudyConfig study = study_config_from(cfg, ds);
  std::vector<StudyReport> reports;
  bool want_dropout = false, want_rct = false;
  for (const auto& s : cfg.at("study").at("studies")) {
    const std::string name = s.get<std::string>();
    if (name == "dropout") {
      want_dropout = true;
    } else if (name == "synthetic-rct") {
      want_rct = true;
    } else {
      throw ValidationError("config: unknown study '" + name + "'");
    }
  }
  if (want_dropout) reports.push_back(run_dropout_study(ds, study));
  if (want_rct) reports.push_back(run_synthetic_rct_study(ds, study));
  if (reports.empty()) {
    throw ValidationError("evaluate: no studies enabled");
  }

  Outputs outputs(cfg.at("io").at("out").get<std::string>());
  with_cleanup(outputs, [&] {
    write_reports(outputs, cfg, "evaluate", ds, reports);
    if (cfg.at("study").at("trajectories").get<bool>() && want_dropout) {
      write_trajectories(outputs, ds, reports.front());
    }
    write_config_echo(outputs, "evaluate", cfg);
  });
  return 0;
}

// ---------------------------------------------------------------------------

int dispatch(const std::string& command, const json& cfg) {
  if (command == "simulate") return cmd_simulate(cfg);
  if (command == "dropout-sim") return cmd_dropout_sim(cfg);
  if (command == "impute") return cmd_impute(cfg);
  if (command == "synthetic-rct") return cmd_synthetic_rct(cfg);
  if (command == "spectrum") return cmd_spectrum(cfg);
  if (command == "evaluate") return cmd_evaluate(cfg);
  throw ValidationError("unknown command: " + command);
}

void print_error(const std::string& category, const std::string& message) {
  json err{{"error", {{"category", category}, {"message", message}}}};
  std::cerr << err.dump() << std::endl;
}

}  // namespace

json default_config() { return make_default_config(); }

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"Synthetic nearest neighbors for partially observed trials"};
  app.require_subcommand(1);

  // Parsed flag storage; values are folded into the JSON config tree
  // only when explicitly provided so file values survive.
  struct Flags {
    std::string config_path, outcomes, covariates, out, format = "csv";
    std::uint64_t seed = 0;
    int patients = 0, visits = 0, arms = 0, covariate_count = 0, rank = 0;
    double outcome_noise = 0.0, covariate_noise = 0.0;
    std::string factor_dist, mechanism, estimator, rank_mode,
        baseline_covariate;
    std::vector<std::string> mechanisms, estimators, studies;
    std::vector<double> rates;
    int repeats = 0, subgroups = 0, fixed_rank = 0, min_subgroup_size = 0,
        neighbors = 0, eval_visit = 0, top = 0;
    double alpha = 0.0, z_ci = 0.0, energy_fraction = 0.0;
    bool noise_sqrt = false, eval_all_visits = false, trajectories = false;
  } f;

  std::vector<std::pair<CLI::Option*, std::function<void(json&)>>> appliers;
  auto bind = [&appliers](CLI::Option* opt, std::function<void(json&)> fn) {
    appliers.emplace_back(opt, std::move(fn));
  };

  auto add_shared = [&](CLI::App* sub) {
    sub->add_option("--config", f.config_path,
                    "JSON configuration file (flags override it)");
    bind(sub->add_option("--seed", f.seed, "RNG seed"),
         [&f](json& c) { c["seed"] = f.seed; });
    bind(sub->add_option("--out", f.out, "output directory"),
         [&f](json& c) { c["io"]["out"] = f.out; });
    bind(sub->add_option("--format", f.format, "csv|json tabular outputs")
             ->check(CLI::IsMember({"csv", "json"})),
         [&f](json& c) { c["io"]["format"] = f.format; });
  };
  auto add_inputs = [&](CLI::App* sub) {
    bind(sub->add_option("--outcomes", f.outcomes, "outcomes CSV (long format)"),
         [&f](json& c) { c["io"]["outcomes"] = f.outcomes; });
    bind(sub->add_option("--covariates", f.covariates, "covariates CSV"),
         [&f](json& c) { c["io"]["covariates"] = f.covariates; });
  };
  auto add_snn = [&](CLI::App* sub) {
    bind(sub->add_option("--subgroups", f.subgroups, "donor subgroups K"),
         [&f](json& c) { c["snn"]["n_subgroups"] = f.subgroups; });
    bind(sub->add_option("--alpha", f.alpha, "diagnostic tolerance"),
         [&f](json& c) { c["snn"]["alpha"] = f.alpha; });
    bind(sub->add_option("--rank-mode", f.rank_mode, "universal|fixed|energy"),
         [&f](json& c) { c["snn"]["rank_mode"] = f.rank_mode; });
    bind(sub->add_option("--fixed-rank", f.fixed_rank, "rank for fixed mode"),
         [&f](json& c) { c["snn"]["fixed_rank"] = f.fixed_rank; });
    bind(sub->add_option("--energy-fraction", f.energy_fraction,
                         "fraction for energy mode"),
         [&f](json& c) { c["snn"]["energy_fraction"] = f.energy_fraction; });
    bind(sub->add_option("--min-subgroup-size", f.min_subgroup_size,
                         "smallest admissible subgroup"),
         [&f](json& c) { c["snn"]["min_subgroup_size"] = f.min_subgroup_size; });
    bind(sub->add_option("--z-ci", f.z_ci, "normal quantile for intervals"),
         [&f](json& c) { c["snn"]["z_ci"] = f.z_ci; });
    bind(sub->add_flag("--noise-sqrt-denominator", f.noise_sqrt,
                       "divide the noise estimate by sqrt(|T|+d)"),
         [&f](json& c) { c["snn"]["noise_sqrt_denominator"] = f.noise_sqrt; });
    bind(sub->add_option("--neighbors", f.neighbors, "matching neighbors"),
         [&f](json& c) { c["matching"]["n_neighbors"] = f.neighbors; });
  };
  auto add_schedule = [&](CLI::App* sub) {
    bind(sub->add_option("--rates", f.rates,
                         "dropout rates for visits 2..T (comma separated)")
             ->delimiter(','),
         [&f](json& c) { c["schedule"]["rates"] = f.rates; });
    bind(sub->add_option("--baseline-col", f.baseline_covariate,
                         "covariate column holding the pre-trial outcome"),
         [&f](json& c) {
           c["study"]["baseline_covariate"] = f.baseline_covariate;
         });
  };

  CLI::App* simulate =
      app.add_subcommand("simulate", "generate a synthetic low-rank trial");
  add_shared(simulate);
  bind(simulate->add_option("--patients", f.patients, "number of patients"),
       [&f](json& c) { c["generator"]["patients"] = f.patients; });
  bind(simulate->add_option("--visits", f.visits, "number of visits"),
       [&f](json& c) { c["generator"]["visits"] = f.visits; });
  bind(simulate->add_option("--arms", f.arms, "number of arms"),
       [&f](json& c) { c["generator"]["arms"] = f.arms; });
  bind(simulate->add_option("--covariates", f.covariate_count,
                            "number of pretreatment variables"),
       [&f](json& c) { c["generator"]["covariates"] = f.covariate_count; });
  bind(simulate->add_option("--rank", f.rank, "latent factor rank"),
       [&f](json& c) { c["generator"]["rank"] = f.rank; });
  bind(simulate->add_option("--outcome-noise", f.outcome_noise,
                            "outcome noise std"),
       [&f](json& c) { c["generator"]["outcome_noise"] = f.outcome_noise; });
  bind(simulate->add_option("--covariate-noise", f.covariate_noise,
                            "covariate noise std"),
       [&f](json& c) { c["generator"]["covariate_noise"] = f.covariate_noise; });
  bind(simulate->add_option("--factor-dist", f.factor_dist,
                            "uniform|gaussian"),
       [&f](json& c) { c["generator"]["factor_distribution"] = f.factor_dist; });

  CLI::App* dropout_sim = app.add_subcommand(
      "dropout-sim", "simulate withdrawal on a fully observed trial");
  add_shared(dropout_sim);
  add_inputs(dropout_sim);
  add_schedule(dropout_sim);
  bind(dropout_sim->add_option("--mechanism", f.mechanism, "mcar|mar|mnar"),
       [&f](json& c) { c["study"]["mechanisms"] = json::array({f.mechanism}); });

  CLI::App* impute = app.add_subcommand(
      "impute", "predict the missing outcomes of withdrawn patients");
  add_shared(impute);
  add_inputs(impute);
  add_snn(impute);
  bind(impute->add_option("--estimator", f.estimator,
                          "snn|naive|locf|matching"),
       [&f](json& c) { c["study"]["estimators"] = json::array({f.estimator}); });

  CLI::App* synth = app.add_subcommand(
      "synthetic-rct", "withhold half of each arm and recreate it");
  add_shared(synth);
  add_inputs(synth);
  add_snn(synth);
  bind(synth->add_option("--repeats", f.repeats, "experimental repeats"),
       [&f](json& c) { c["study"]["repeats"] = f.repeats; });
  bind(synth->add_option("--estimators", f.estimators,
                         "comma-separated estimator list")
           ->delimiter(','),
       [&f](json& c) { c["study"]["estimators"] = f.estimators; });
  bind(synth->add_option("--eval-visit", f.eval_visit, "evaluation visit"),
       [&f](json& c) { c["study"]["eval_visit"] = f.eval_visit; });

  CLI::App* spectrum = app.add_subcommand(
      "spectrum", "per-arm cumulative spectral energy profiles");
  add_shared(spectrum);
  add_inputs(spectrum);
  bind(spectrum->add_option("--top", f.top, "number of leading components"),
       [&f](json& c) { c["spectrum"]["top"] = f.top; });

  CLI::App* evaluate = app.add_subcommand(
      "evaluate", "run the dropout and synthetic-RCT studies");
  add_shared(evaluate);
  add_inputs(evaluate);
  add_snn(evaluate);
  add_schedule(evaluate);
  bind(evaluate->add_option("--repeats", f.repeats, "experimental repeats"),
       [&f](json& c) { c["study"]["repeats"] = f.repeats; });
  bind(evaluate->add_option("--mechanisms", f.mechanisms,
                            "comma-separated mechanism list")
           ->delimiter(','),
       [&f](json& c) { c["study"]["mechanisms"] = f.mechanisms; });
  bind(evaluate->add_option("--estimators", f.estimators,
                            "comma-separated estimator list")
           ->delimiter(','),
       [&f](json& c) { c["study"]["estimators"] = f.estimators; });
  bind(evaluate->add_option("--studies", f.studies,
                            "dropout,synthetic-rct")
           ->delimiter(','),
       [&f](json& c) { c["study"]["studies"] = f.studies; });
  bind(evaluate->add_option("--eval-visit", f.eval_visit, "evaluation visit"),
       [&f](json& c) { c["study"]["eval_visit"] = f.eval_visit; });
  bind(evaluate->add_flag("--eval-all-visits", f.eval_all_visits,
                          "also predict every post-withdrawal visit"),
       [&f](json& c) { c["study"]["eval_all_visits"] = f.eval_all_visits; });
  bind(evaluate->add_flag("--trajectories", f.trajectories,
                          "emit per-patient trajectory CSVs"),
       [&f](json& c) { c["study"]["trajectories"] = f.trajectories; });

  std::vector<const char*> argv{"snn"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("validation", std::string("argument error: ") + e.what());
    return 2;
  }

  try {
    json cfg = make_default_config();
    if (!f.config_path.empty()) {
      std::ifstream in(f.config_path);
      if (!in) throw IoError("cannot open config file: " + f.config_path);
      json user;
      try {
        user = json::parse(in);
      } catch (const std::exception& e) {
        throw ValidationError("config parse error: " + std::string(e.what()));
      }
      validate_keys(user, cfg, "");
      deep_merge(cfg, user);
    }
    for (auto& [opt, apply] : appliers) {
      if (opt->count() > 0) apply(cfg);
    }
    CLI::App* sub = app.get_subcommands().front();
    return dispatch(sub->get_name(), cfg);
  } catch (const ValidationError& e) {
    print_error("validation", e.what());
    return 2;
  } catch (const IoError& e) {
    print_error("io", e.what());
    return 3;
  } catch (const NumericalError& e) {
    print_error("numerical", e.what());
    return 4;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
}

}  // namespace snn::cli
