#include "snn/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "snn/errors.hpp"

namespace snn {

void SnnConfig::validate() const {
  if (n_subgroups < 1) throw ValidationError("snn: n_subgroups must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0) && alpha != 0.0) {
    throw ValidationError("snn: alpha must lie in [0,1)");
  }
  if (z_ci <= 0.0) throw ValidationError("snn: z_ci must be positive");
  if (min_subgroup_size && *min_subgroup_size < 1) {
    throw ValidationError("snn: min_subgroup_size must be >= 1");
  }
}

const char* interval_kind_name(IntervalKind kind) {
  switch (kind) {
    case IntervalKind::kEnsembleQuantile:
      return "ensemble-quantile";
    case IntervalKind::kRegressionFormula:
      return "regression-formula";
    case IntervalKind::kNone:
      break;
  }
  return "none";
}

namespace {

double max_stat(const SnnPrediction& p, bool want_theta) {
  double best = 0.0;
  if (!p.retained.empty()) {
    for (int k : p.retained) {
      best = std::max(best, want_theta ? p.per_model[k].theta
                                       : p.per_model[k].phi);
    }
    return best;
  }
  for (const auto& m : p.per_model) {
    best = std::max(best, want_theta ? m.theta : m.phi);
  }
  return best;
}

}  // namespace

double SnnPrediction::theta_max() const { return max_stat(*this, true); }
double SnnPrediction::phi_max() const { return max_stat(*this, false); }

std::vector<std::vector<int>> partition_donors(const std::vector<int>& donors,
                                               int n_subgroups,
                                               int min_subgroup_size,
                                               Rng& rng) {
  if (donors.empty()) throw ValidationError("partition_donors: empty donor set");
  if (n_subgroups < 1 || min_subgroup_size < 1) {
    throw ValidationError("partition_donors: K and floor must be >= 1");
  }
  const int n = static_cast<int>(donors.size());
  int k = std::min<int>(n_subgroups, std::max(1, n / min_subgroup_size));
  k = std::min(k, n);

  std::vector<int> pool = donors;
  rng.shuffle(pool);
  std::vector<std::vector<int>> groups(k);
  const int base = n / k;
  const int extra = n % k;
  int pos = 0;
  for (int g = 0; g < k; ++g) {
    const int size = base + (g < extra ? 1 : 0);
    groups[g].assign(pool.begin() + pos, pool.begin() + pos + size);
    std::sort(groups[g].begin(), groups[g].end());
    pos += size;
  }
  return groups;
}

Eigen::VectorXd fit_pcr(const Eigen::VectorXd& target_features,
                        const spectra::SpectralDecomposition& dec, int rank) {
  if (rank < 1 || rank > dec.q()) {
    throw ValidationError("fit_pcr: rank out of range");
  }
  if (target_features.size() != dec.right_vectors.rows()) {
    throw ValidationError("fit_pcr: feature length does not match donor matrix");
  }
  for (int l = 0; l < rank; ++l) {
    if (dec.singular_values[l] < 1e-12) {
      std::ostringstream os;
      os << "fit_pcr: retained singular value " << (l + 1) << " is "
         << dec.singular_values[l] << " (< 1e-12): rank overshoot";
      throw NumericalError(os.str());
    }
  }
  // beta = sum_{l<=b} (1/sigma_l) u_l v_l^T z
  Eigen::VectorXd coeffs =
      dec.right_vectors.leftCols(rank).transpose() * target_features;
  coeffs.array() /= dec.singular_values.head(rank).array();
  return dec.left_vectors.leftCols(rank) * coeffs;
}

Eigen::VectorXd fit_pcr(const Eigen::VectorXd& target_features,
                        const Eigen::MatrixXd& donor_matrix, int rank) {
  return fit_pcr(target_features, spectra::svd(donor_matrix), rank);
}

std::pair<double, double> compute_diagnostics(
    const Eigen::VectorXd& std_features, const Eigen::VectorXd& std_outcomes,
    const spectra::SpectralDecomposition& truncated) {
  const double zn = std_features.norm();
  const double yn = std_outcomes.norm();
  if (zn <= 0.0) {
    throw NumericalError("diagnostics: zero-norm target feature vector");
  }
  if (yn <= 0.0) {
    throw NumericalError("diagnostics: zero-norm donor outcome vector");
  }
  const auto& v = truncated.right_vectors;
  const auto& u = truncated.left_vectors;
  const double theta = (std_features - v * (v.transpose() * std_features)).norm() / zn;
  const double phi = (std_outcomes - u * (u.transpose() * std_outcomes)).norm() / yn;
  auto clamp01 = [](double x) { return std::min(1.0, std::max(0.0, x)); };
  return {clamp01(theta), clamp01(phi)};
}

std::pair<double, double> prediction_interval_ensemble(
    const std::vector<double>& estimates) {
  if (estimates.size() < 2) {
    throw ValidationError(
        "prediction_interval_ensemble: need at least 2 estimates");
  }
  std::vector<double> sorted = estimates;
  std::sort(sorted.begin(), sorted.end());
  auto percentile = [&sorted](double p) {
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p / 100.0;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const double frac = h - static_cast<double>(lo);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
  };
  return {percentile(2.5), percentile(97.5)};
}

SingleModelInterval prediction_interval_single(
    const SubgroupModel& model, const Eigen::VectorXd& std_outcomes,
    double z_ci, double noise_std) {
  if (noise_std < 0.0) {
    throw ValidationError("prediction_interval_single: negative noise level");
  }
  const auto& dec = model.decomposition;
  Eigen::VectorXd w = dec.left_vectors.transpose() * std_outcomes;
  double quad = 0.0;
  for (int l = 0; l < dec.q(); ++l) {
    if (dec.singular_values[l] < 1e-12) {
      throw NumericalError(
          "prediction_interval_single: singular value below 1e-12, quadratic "
          "form ill-posed");
    }
    const double r = w[l] / dec.singular_values[l];
    quad += r * r;
  }
  const double c = model.point_estimate;
  const double half_mean = z_ci * noise_std * std::sqrt(quad);
  const double half_out = z_ci * noise_std * std::sqrt(1.0 + quad);
  return {{c - half_mean, c + half_mean}, {c - half_out, c + half_out}};
}

double estimate_noise_std(double theta, const Eigen::VectorXd& features,
                          bool sqrt_denominator) {
  if (theta < 0.0 || theta > 1.0) {
    throw ValidationError("estimate_noise_std: theta must lie in [0,1]");
  }
  const double p = static_cast<double>(features.size());
  if (p <= 0.0) throw ValidationError("estimate_noise_std: empty features");
  const double denom = sqrt_denominator ? std::sqrt(p) : p;
  return theta * features.norm() / denom;
}

SnnPrediction predict(const TrialDataset& ds, const TargetTuple& target,
                      const SnnConfig& config) {
  config.validate();
  const int i = target.patient;
  const int t = target.visit;
  const int a = target.arm;
  if (i < 0 || i >= ds.n_patients || t < 1 || t > ds.n_visits || a < 0 ||
      a >= ds.n_arms) {
    throw ValidationError("predict: target indices out of range");
  }

  std::vector<int> donors = donor_set(ds, t, a);
  donors.erase(std::remove(donors.begin(), donors.end(), i), donors.end());
  if (donors.empty()) {
    std::ostringstream os;
    os << "predict: no donors observed at (visit=" << t << ", arm="
       << ds.arm_labels[a] << ")";
    throw ValidationError(os.str());
  }

  const std::vector<int> visit_set = observed_visits(ds, i, a, t);
  const FeatureVector fv = feature_vector(ds, i, visit_set, a);
  const int p = static_cast<int>(fv.values.size());
  const int min_size = config.min_subgroup_size.value_or(std::max(10, p + 1));

  Rng rng(derive_seed({config.seed, static_cast<std::uint64_t>(i),
                       static_cast<std::uint64_t>(t),
                       static_cast<std::uint64_t>(a)}));
  const auto groups =
      partition_donors(donors, config.n_subgroups, min_size, rng);

  SnnPrediction pred;
  pred.target = target;
  pred.per_model.reserve(groups.size());

  for (const auto& group : groups) {
    const int m = static_cast<int>(group.size());
    Eigen::MatrixXd donor_raw(m, p);
    Eigen::VectorXd y_raw(m);
    for (int r = 0; r < m; ++r) {
      const FeatureVector row = feature_vector(ds, group[r], visit_set, a);
      donor_raw.row(r) = row.values;
      y_raw[r] = ds.outcome(group[r], t, a);
    }

    SubgroupModel model;
    model.donor_indices = group;
    Eigen::MatrixXd donor_std;
    if (m == 1) {
      model.standardization = spectra::Standardization::identity(p);
      donor_std = donor_raw;
    } else {
      auto [mat, record] = spectra::standardize_columns(donor_raw);
      donor_std = std::move(mat);
      model.standardization = std::move(record);
      if (std::all_of(model.standardization.degenerate.begin(),
                      model.standardization.degenerate.end(),
                      [](std::uint8_t f) { return f != 0; })) {
        throw ValidationError(
            "predict: degenerate feature matrix (every column constant "
            "across donors)");
      }
    }
    const Eigen::VectorXd z_std = model.standardization.apply(fv.values);

    const auto dec = spectra::svd(donor_std);
    model.rank = spectra::select_rank(dec.singular_values, m, p,
                                      config.rank_mode);
    model.beta = fit_pcr(z_std, dec, model.rank);
    model.decomposition = dec.truncated(model.rank);

    Eigen::VectorXd y_std;
    if (model.standardization.is_identity) {
      model.outcome_mean = 0.0;
      model.outcome_scale = 1.0;
      y_std = y_raw;
    } else {
      const auto ys = spectra::standardize_vector(y_raw);
      model.outcome_mean = ys.mean;
      model.outcome_scale = ys.scale;
      y_std = ys.values;
    }
    std::tie(model.theta, model.phi) =
        compute_diagnostics(z_std, y_std, model.decomposition);

    // The fit lives in centered coordinates, so the raw-scale estimate
    // restores the donor-mean level of the target-visit column.
    model.point_estimate =
        model.outcome_mean +
        (y_raw.array() - model.outcome_mean).matrix().dot(model.beta);
    pred.per_model.push_back(std::move(model));
  }

  for (int k = 0; k < static_cast<int>(pred.per_model.size()); ++k) {
    const auto& mdl = pred.per_model[k];
    if (mdl.theta < config.alpha && mdl.phi < config.alpha) {
      pred.retained.push_back(k);
    }
  }
  pred.passed = !pred.retained.empty();

  std::vector<int> pool = pred.retained;
  if (pool.empty()) {
    pool.resize(pred.per_model.size());
    for (std::size_t k = 0; k < pool.size(); ++k) pool[k] = static_cast<int>(k);
  }
  double sum = 0.0;
  for (int k : pool) sum += pred.per_model[k].point_estimate;
  pred.estimate = sum / static_cast<double>(pool.size());

  if (pool.size() >= 2) {
    std::vector<double> ests;
    ests.reserve(pool.size());
    for (int k : pool) ests.push_back(pred.per_model[k].point_estimate);
    std::tie(pred.lower, pred.upper) = prediction_interval_ensemble(ests);
    pred.interval_kind = IntervalKind::kEnsembleQuantile;
  } else if (pred.passed) {
    const auto& mdl = pred.per_model[pool[0]];
    const Eigen::VectorXd z_std = mdl.standardization.apply(fv.values);
    const double nu_out =
        estimate_noise_std(mdl.theta, z_std, config.noise_sqrt_denominator) *
        mdl.outcome_scale;
    Eigen::VectorXd y_raw(static_cast<int>(mdl.donor_indices.size()));
    for (int r = 0; r < y_raw.size(); ++r) {
      y_raw[r] = ds.outcome(mdl.donor_indices[r], t, a);
    }
    Eigen::VectorXd y_std = mdl.standardization.is_identity
                                ? y_raw
                                : spectra::standardize_vector(y_raw).values;
    const auto interval =
        prediction_interval_single(mdl, y_std, config.z_ci, nu_out);
    pred.lower = interval.outcome_interval.first;
    pred.upper = interval.outcome_interval.second;
    pred.interval_kind = IntervalKind::kRegressionFormula;
    pred.noise_std = nu_out;
  }
  return pred;
}

}  // namespace snn
