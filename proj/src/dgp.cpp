#include "snn/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "snn/errors.hpp"

namespace snn {

const char* mechanism_name(Mechanism m) {
  switch (m) {
    case Mechanism::kMcar:
      return "mcar";
    case Mechanism::kMar:
      return "mar";
    case Mechanism::kMnar:
      return "mnar";
  }
  return "?";
}

Mechanism mechanism_from_name(const std::string& name) {
  if (name == "mcar") return Mechanism::kMcar;
  if (name == "mar") return Mechanism::kMar;
  if (name == "mnar") return Mechanism::kMnar;
  throw ValidationError("unknown missingness mechanism: '" + name +
                        "' (expected mcar|mar|mnar)");
}

const char* factor_distribution_name(FactorDistribution d) {
  return d == FactorDistribution::kUniform ? "uniform" : "gaussian";
}

FactorDistribution factor_distribution_from_name(const std::string& name) {
  if (name == "uniform") return FactorDistribution::kUniform;
  if (name == "gaussian") return FactorDistribution::kGaussian;
  throw ValidationError("unknown factor distribution: '" + name +
                        "' (expected uniform|gaussian)");
}

namespace {

double draw_factor(FactorDistribution dist, Rng& rng) {
  return dist == FactorDistribution::kUniform ? rng.uniform(-1.0, 1.0)
                                              : rng.normal();
}

void fill_factors(Eigen::MatrixXd& m, FactorDistribution dist, Rng& rng) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(r, c) = draw_factor(dist, rng);
    }
  }
}

}  // namespace

LatentFactorModel LatentFactorModel::sample(int n_patients, int n_visits,
                                            int n_arms, int n_covariates,
                                            int rank, FactorDistribution dist,
                                            double outcome_noise_std,
                                            double covariate_noise_std,
                                            Rng& rng) {
  if (n_patients < 1 || n_visits < 1 || n_arms < 1 || n_covariates < 1 ||
      rank < 1) {
    throw ValidationError("latent factor model: dimensions must be positive");
  }
  if (outcome_noise_std < 0.0 || covariate_noise_std < 0.0) {
    throw ValidationError("latent factor model: noise levels must be >= 0");
  }
  LatentFactorModel model;
  model.rank = rank;
  model.distribution = dist;
  model.outcome_noise_std = outcome_noise_std;
  model.covariate_noise_std = covariate_noise_std;
  model.patient_factors.resize(n_patients, rank);
  fill_factors(model.patient_factors, dist, rng);
  model.visit_arm_factors.resize(n_arms);
  for (int a = 0; a < n_arms; ++a) {
    model.visit_arm_factors[a].resize(n_visits, rank);
    fill_factors(model.visit_arm_factors[a], dist, rng);
  }
  model.covariate_factors.resize(n_covariates, rank);
  fill_factors(model.covariate_factors, dist, rng);
  return model;
}

double signal_scale(const LatentFactorModel& model) {
  const int n = model.n_patients();
  const int t_max = model.n_visits();
  const int arms = model.n_arms();
  double sum = 0.0, sumsq = 0.0;
  const double count = static_cast<double>(n) * t_max * arms;
  for (int a = 0; a < arms; ++a) {
    for (int t = 1; t <= t_max; ++t) {
      for (int i = 0; i < n; ++i) {
        const double v = model.mean_outcome(i, t, a);
        sum += v;
        sumsq += v * v;
      }
    }
  }
  const double mean = sum / count;
  return std::sqrt(std::max(0.0, sumsq / count - mean * mean));
}

double covariate_signal_scale(const LatentFactorModel& model) {
  const Eigen::MatrixXd x =
      model.patient_factors * model.covariate_factors.transpose();
  const double mean = x.mean();
  return std::sqrt(
      std::max(0.0, x.array().square().mean() - mean * mean));
}

std::vector<int> assign_arms(int n_patients, int n_arms, Rng& rng) {
  if (n_patients < 1 || n_arms < 1) {
    throw ValidationError("assign_arms: counts must be positive");
  }
  std::vector<int> arm_order(n_arms);
  for (int a = 0; a < n_arms; ++a) arm_order[a] = a;
  rng.shuffle(arm_order);  // which arms receive the remainder
  std::vector<int> labels;
  labels.reserve(n_patients);
  const int base = n_patients / n_arms;
  const int extra = n_patients % n_arms;
  for (int k = 0; k < n_arms; ++k) {
    const int size = base + (k < extra ? 1 : 0);
    labels.insert(labels.end(), size, arm_order[k]);
  }
  rng.shuffle(labels);
  return labels;
}

GeneratedTrial generate_trial(const LatentFactorModel& model, Rng& rng) {
  const int n = model.n_patients();
  const int t_max = model.n_visits();
  const int arms = model.n_arms();
  const int d = model.n_covariates();
  if (n < 1 || t_max < 1 || arms < 1 || d < 1) {
    throw ValidationError("generate_trial: model has empty factors");
  }

  GeneratedTrial out;
  auto& ds = out.dataset;
  ds.n_patients = n;
  ds.n_visits = t_max;
  ds.n_arms = arms;
  ds.n_covariates = d;
  ds.outcome_values.assign(static_cast<std::size_t>(n) * t_max * arms, 0.0);
  ds.outcome_present.assign(ds.outcome_values.size(), 0);
  ds.dropout.assign(static_cast<std::size_t>(n) * t_max, 0);

  int width = 1;
  for (int v = n; v >= 10; v /= 10) ++width;
  for (int i = 0; i < n; ++i) {
    std::ostringstream id;
    id << "p";
    std::string digits = std::to_string(i + 1);
    id << std::string(width + 1 - digits.size(), '0') << digits;
    ds.patient_ids.push_back(id.str());
  }
  if (d == 4) {
    ds.covariate_labels = {"age", "sex", "baseline_adascog", "baseline_mmse"};
  } else {
    for (int c = 0; c < d; ++c) {
      ds.covariate_labels.push_back("cov_" + std::to_string(c + 1));
    }
  }
  for (int a = 0; a < arms; ++a) ds.arm_labels.push_back(std::to_string(a));

  ds.arm_assignment = assign_arms(n, arms, rng);

  ds.covariates = model.patient_factors * model.covariate_factors.transpose();
  if (model.covariate_noise_std > 0.0) {
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < d; ++c) {
        ds.covariates(i, c) += rng.normal(0.0, model.covariate_noise_std);
      }
    }
  }

  out.ground_truth.n_patients = n;
  out.ground_truth.n_visits = t_max;
  out.ground_truth.n_arms = arms;
  out.ground_truth.means.resize(ds.outcome_values.size());
  for (int t = 1; t <= t_max; ++t) {
    for (int i = 0; i < n; ++i) {
      for (int a = 0; a < arms; ++a) {
        out.ground_truth.means[ds.cell(i, t, a)] = model.mean_outcome(i, t, a);
      }
    }
  }

  for (int i = 0; i < n; ++i) {
    const int a = ds.arm_assignment[i];
    for (int t = 1; t <= t_max; ++t) {
      double y = out.ground_truth.at(i, t, a);
      if (model.outcome_noise_std > 0.0) {
        y += rng.normal(0.0, model.outcome_noise_std);
      }
      ds.set_outcome(i, t, a, y);
    }
  }
  ds.validate();
  return out;
}

DropoutRateSchedule DropoutRateSchedule::standard() {
  return {{0.10, 0.08, 0.06, 0.04}};
}

void DropoutRateSchedule::validate(int n_visits) const {
  if (static_cast<int>(rates.size()) != n_visits - 1) {
    std::ostringstream os;
    os << "dropout schedule: expected " << (n_visits - 1)
       << " rates (visits 2.." << n_visits << "), got " << rates.size();
    throw ValidationError(os.str());
  }
  double total = 0.0;
  for (double r : rates) {
    if (r < 0.0 || r >= 1.0) {
      throw ValidationError("dropout schedule: rates must lie in [0,1)");
    }
    total += r;
  }
  if (total >= 1.0) {
    throw ValidationError("dropout schedule: rates must sum below 1");
  }
}

double ewm(const std::vector<double>& values, int span) {
  if (values.empty()) throw ValidationError("ewm: empty input");
  if (span < 1) throw ValidationError("ewm: span must be >= 1");
  const double lambda = 2.0 / (span + 1.0);
  const double decay = 1.0 - lambda;
  const int m = static_cast<int>(values.size());
  double wsum = 0.0, dot = 0.0;
  for (int j = 0; j < m; ++j) {
    const double w = std::pow(decay, m - 1 - j);
    wsum += w;
    dot += w * values[j];
  }
  return dot / wsum;
}

double dropout_probability(const std::vector<double>& deltas, int span) {
  return 1.0 / (1.0 + std::exp(-ewm(deltas, span)));
}

namespace {

int quota_for(double rate, int arm_size) {
  return static_cast<int>(std::floor(rate * arm_size + 0.5));
}

std::vector<double> mar_deltas(const TrialDataset& ds, int patient, int arm,
                               int visit, double baseline) {
  std::vector<double> deltas;
  for (int tau = 1; tau <= visit - 1; ++tau) {
    deltas.push_back(ds.outcome(patient, tau, arm) - baseline);
  }
  return deltas;
}

std::vector<double> mnar_deltas(const TrialDataset& ds, int patient, int arm,
                                int visit, double baseline) {
  std::vector<double> deltas;
  for (int tau = visit - 1; tau <= ds.n_visits; ++tau) {
    deltas.push_back(ds.outcome(patient, tau, arm) - baseline);
  }
  return deltas;
}

}  // namespace

DropoutSimulation simulate_dropouts(const TrialDataset& complete,
                                    Mechanism mechanism,
                                    const DropoutRateSchedule& schedule,
                                    int baseline_covariate, Rng& rng) {
  schedule.validate(complete.n_visits);
  if (baseline_covariate < 0 || baseline_covariate >= complete.n_covariates) {
    throw ValidationError("simulate_dropouts: baseline covariate out of range");
  }
  for (int i = 0; i < complete.n_patients; ++i) {
    if (complete.arm_assignment[i] == kNoArm || complete.dropped(i, 1) ||
        complete.dropped(i, complete.n_visits)) {
      throw ValidationError(
          "simulate_dropouts: input must be fully observed (patient " +
          complete.patient_ids[i] + " has missing outcomes)");
    }
  }

  DropoutSimulation sim;
  sim.dataset = complete;
  sim.dropout_sets.resize(complete.n_arms);

  for (int a = 0; a < complete.n_arms; ++a) {
    std::vector<int> active;
    for (int i = 0; i < complete.n_patients; ++i) {
      if (complete.arm_assignment[i] == a) active.push_back(i);
    }
    const int arm_size = static_cast<int>(active.size());

    for (int t = 2; t <= complete.n_visits; ++t) {
      const int quota = quota_for(schedule.rate_for_visit(t), arm_size);
      if (quota == 0) continue;
      if (quota > static_cast<int>(active.size())) {
        std::ostringstream os;
        os << "simulate_dropouts: visit " << t << " quota " << quota
           << " exceeds " << active.size() << " active patients in arm "
           << complete.arm_labels[a];
        throw ValidationError(os.str());
      }

      std::vector<int> selected;
      if (mechanism == Mechanism::kMcar) {
        std::vector<int> order = active;
        rng.shuffle(order);
        selected.assign(order.begin(), order.begin() + quota);
      } else {
        const int span = mechanism == Mechanism::kMar
                             ? t - 1
                             : complete.n_visits - (t - 1);
        std::vector<int> candidates = active;
        int passes = 0;
        while (static_cast<int>(selected.size()) < quota) {
          if (++passes > 100000) {
            throw NumericalError(
                "simulate_dropouts: dropout quota unreachable (withdrawal "
                "probabilities too small)");
          }
          rng.shuffle(candidates);
          std::vector<int> remaining;
          for (int i : candidates) {
            if (static_cast<int>(selected.size()) == quota) {
              remaining.push_back(i);
              continue;
            }
            const double baseline =
                complete.covariates(i, baseline_covariate);
            const auto deltas =
                mechanism == Mechanism::kMar
                    ? mar_deltas(complete, i, a, t, baseline)
                    : mnar_deltas(complete, i, a, t, baseline);
            if (rng.bernoulli(dropout_probability(deltas, span))) {
              selected.push_back(i);
            } else {
              remaining.push_back(i);
            }
          }
          candidates = std::move(remaining);
        }
      }

      for (int i : selected) {
        sim.dataset.withdraw_from(i, t);
        sim.dropout_sets[a].push_back({i, t});
        active.erase(std::remove(active.begin(), active.end(), i),
                     active.end());
      }
    }
  }
  sim.dataset.validate();
  return sim;
}

}  // namespace snn
