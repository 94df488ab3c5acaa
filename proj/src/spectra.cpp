#include "snn/spectra.hpp"

#include <algorithm>
#include <cmath>

#include "snn/errors.hpp"

namespace snn::spectra {

SpectralDecomposition SpectralDecomposition::truncated(int b) const {
  SpectralDecomposition out;
  out.left_vectors = left_vectors.leftCols(b);
  out.singular_values = singular_values.head(b);
  out.right_vectors = right_vectors.leftCols(b);
  return out;
}

SpectralDecomposition svd(const Eigen::MatrixXd& matrix) {
  if (!matrix.allFinite()) {
    throw NumericalError("svd: input contains non-finite entries");
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> solver(
      matrix, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("svd: decomposition failed to converge");
  }
  SpectralDecomposition dec;
  dec.left_vectors = solver.matrixU();
  dec.singular_values = solver.singularValues();
  dec.right_vectors = solver.matrixV();
  return dec;
}

int select_rank(const Eigen::VectorXd& singular_values, int m, int n,
                const RankSelection& mode) {
  const int q = static_cast<int>(singular_values.size());
  if (q == 0) throw ValidationError("select_rank: empty spectrum");
  if (m < 1 || n < 1) throw ValidationError("select_rank: m,n must be >= 1");
  const int qmax = std::min(m, n);

  switch (mode.mode) {
    case RankMode::kFixed: {
      if (mode.fixed_rank < 1) {
        throw ValidationError("select_rank: fixed rank must be >= 1");
      }
      return std::min(mode.fixed_rank, std::min(q, qmax));
    }
    case RankMode::kEnergy: {
      if (!(mode.energy_fraction > 0.0 && mode.energy_fraction <= 1.0)) {
        throw ValidationError("select_rank: energy fraction must be in (0,1]");
      }
      const double total = singular_values.squaredNorm();
      if (total <= 0.0) return 1;
      double cum = 0.0;
      for (int k = 0; k < q; ++k) {
        cum += singular_values[k] * singular_values[k];
        if (cum / total >= mode.energy_fraction) return k + 1;
      }
      return q;
    }
    case RankMode::kUniversal:
      break;
  }

  // Median-based universal hard threshold. The lower median is used so
  // that an exactly low-rank spectrum (zeros past the rank) yields a
  // zero threshold and keeps every nonzero value.
  std::vector<double> sorted(singular_values.data(),
                             singular_values.data() + q);
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[(q - 1) / 2];
  const double beta =
      static_cast<double>(std::min(m, n)) / static_cast<double>(std::max(m, n));
  const double omega =
      0.56 * beta * beta * beta - 0.95 * beta * beta + 1.82 * beta + 1.43;
  const double tau = omega * median;
  const double floor = 1e-12 * singular_values[0];
  int b = 0;
  for (int k = 0; k < q; ++k) {
    if (singular_values[k] > std::max(tau, floor)) ++b;
  }
  return std::max(b, 1);
}

std::vector<double> spectral_energy_profile(const Eigen::MatrixXd& matrix,
                                            int top_k) {
  const int q = static_cast<int>(std::min(matrix.rows(), matrix.cols()));
  if (top_k < 1 || top_k > q) {
    throw ValidationError("spectral_energy_profile: top_k out of range");
  }
  const auto dec = svd(matrix);
  const double total = dec.singular_values.squaredNorm();
  if (total <= 0.0) {
    throw NumericalError(
        "spectral_energy_profile: zero matrix has undefined energy fractions");
  }
  std::vector<double> profile(top_k);
  double cum = 0.0;
  for (int k = 0; k < top_k; ++k) {
    cum += dec.singular_values[k] * dec.singular_values[k];
    profile[k] = cum / total;
  }
  return profile;
}

Eigen::VectorXd Standardization::apply(const Eigen::VectorXd& v) const {
  if (is_identity) return v;
  return (v - mean).cwiseQuotient(scale);
}

Standardization Standardization::identity(int n_cols) {
  Standardization s;
  s.mean = Eigen::VectorXd::Zero(n_cols);
  s.scale = Eigen::VectorXd::Ones(n_cols);
  s.degenerate.assign(n_cols, 0);
  s.is_identity = true;
  return s;
}

std::pair<Eigen::MatrixXd, Standardization> standardize_columns(
    const Eigen::MatrixXd& matrix) {
  const int m = static_cast<int>(matrix.rows());
  const int n = static_cast<int>(matrix.cols());
  if (m < 2) {
    throw ValidationError("standardize_columns: need at least 2 rows");
  }
  Standardization record;
  record.mean.resize(n);
  record.scale.resize(n);
  record.degenerate.assign(n, 0);
  Eigen::MatrixXd out(m, n);
  for (int c = 0; c < n; ++c) {
    const double mu = matrix.col(c).mean();
    Eigen::VectorXd centered = matrix.col(c).array() - mu;
    const double sd = std::sqrt(centered.squaredNorm() / m);  // population
    record.mean[c] = mu;
    if (sd < 1e-12) {
      record.scale[c] = 1.0;
      record.degenerate[c] = 1;
      out.col(c) = centered;
    } else {
      record.scale[c] = sd;
      out.col(c) = centered / sd;
    }
  }
  return {std::move(out), std::move(record)};
}

VectorStandardization standardize_vector(const Eigen::VectorXd& v) {
  VectorStandardization out;
  out.mean = v.size() > 0 ? v.mean() : 0.0;
  Eigen::VectorXd centered = v.array() - out.mean;
  const double sd =
      v.size() > 0 ? std::sqrt(centered.squaredNorm() / v.size()) : 0.0;
  if (sd < 1e-12) {
    out.scale = 1.0;
    out.degenerate = true;
    out.values = centered;
  } else {
    out.scale = sd;
    out.values = centered / sd;
  }
  return out;
}

}  // namespace snn::spectra
