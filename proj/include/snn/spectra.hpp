#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

namespace snn::spectra {

// Thin SVD, singular values nonincreasing.
struct SpectralDecomposition {
  Eigen::MatrixXd left_vectors;     // m x q
  Eigen::VectorXd singular_values;  // q, nonincreasing
  Eigen::MatrixXd right_vectors;    // n x q

  // Top-b truncation.
  SpectralDecomposition truncated(int b) const;
  int q() const { return static_cast<int>(singular_values.size()); }
};

SpectralDecomposition svd(const Eigen::MatrixXd& matrix);

enum class RankMode { kUniversal, kFixed, kEnergy };

struct RankSelection {
  RankMode mode = RankMode::kUniversal;
  int fixed_rank = 2;            // kFixed
  double energy_fraction = 0.99; // kEnergy

  static RankSelection universal() { return {RankMode::kUniversal, 0, 0.0}; }
  static RankSelection fixed(int b) { return {RankMode::kFixed, b, 0.0}; }
  static RankSelection energy(double f) { return {RankMode::kEnergy, 0, f}; }
};

// Hard-threshold rank choice. Universal mode keeps values above
// omega(beta) * median(sigma) with beta = min(m,n)/max(m,n) and
// omega(beta) = 0.56 b^3 - 0.95 b^2 + 1.82 b + 1.43, plus a relative
// numerical floor of 1e-12 * sigma_1; the result is always >= 1.
int select_rank(const Eigen::VectorXd& singular_values, int m, int n,
                const RankSelection& mode);

// Entry k-1 holds sum_{l<=k} sigma_l^2 / sum_l sigma_l^2.
std::vector<double> spectral_energy_profile(const Eigen::MatrixXd& matrix,
                                            int top_k);

// Per-column affine record. Columns whose population deviation falls
// below 1e-12 are centered only and flagged.
struct Standardization {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;  // 1.0 on flagged columns
  std::vector<std::uint8_t> degenerate;

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
  static Standardization identity(int n_cols);
  bool is_identity = false;
};

std::pair<Eigen::MatrixXd, Standardization> standardize_columns(
    const Eigen::MatrixXd& matrix);

// Centers a vector by its own mean and divides by its own population
// deviation (left unscaled when degenerate). Used wherever a fresh
// outcome column must be made consistent with standardized geometry.
struct VectorStandardization {
  Eigen::VectorXd values;
  double mean = 0.0;
  double scale = 1.0;
  bool degenerate = false;
};
VectorStandardization standardize_vector(const Eigen::VectorXd& v);

}  // namespace snn::spectra
