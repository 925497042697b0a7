#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "dryobs/errors.hpp"

namespace dryobs {

enum class FieldId { Moisture, Temperature };

inline const char* field_label(FieldId f) { return f == FieldId::Moisture ? "moisture" : "temperature"; }

/// Field snapshots: column j is the field at times[j].
struct SnapshotSet {
  FieldId field = FieldId::Temperature;
  Eigen::MatrixXd matrix;
  std::vector<double> times;
  double cell_volume = 0.0;

  void validate() const {
    if (matrix.cols() < 2) throw InvalidArgument("snapshot set needs at least 2 columns");
    if (static_cast<Eigen::Index>(times.size()) != matrix.cols()) {
      throw DimensionError("snapshot times and columns differ in count");
    }
    if (!(cell_volume > 0.0)) throw InvalidArgument("cell volume must be > 0");
    if (!matrix.allFinite()) throw InvalidArgument("snapshot matrix contains NaN or Inf");
    for (std::size_t j = 1; j < times.size(); ++j) {
      if (!(times[j] > times[j - 1])) throw InvalidArgument("snapshot times must increase");
    }
  }
};

/// POD of one field under the dV-weighted inner product <a, b> = a^T b dV.
struct PodBasis {
  FieldId field = FieldId::Temperature;
  Eigen::VectorXd mean;
  /// All numerically nonzero modes (N x b), scaled so that modes^T modes dV = I.
  Eigen::MatrixXd all_modes;
  /// Singular values of the centred snapshot matrix, sigma_1..sigma_b.
  Eigen::VectorXd singular_values;
  /// Every singular value returned by the decomposition, including those below rank tolerance.
  Eigen::VectorXd raw_spectrum;
  double cell_volume = 0.0;
  int cutoff = 0;

  int rank() const { return static_cast<int>(singular_values.size()); }
  int size() const { return static_cast<int>(mean.size()); }
  auto modes() const { return all_modes.leftCols(cutoff); }
};

inline Eigen::VectorXd compute_mean(const SnapshotSet& s) {
  if (s.matrix.cols() == 0) throw InvalidArgument("empty snapshot set");
  return s.matrix.rowwise().mean();
}

/// Flips each column so that its largest-magnitude entry is positive.
inline void fix_mode_signs(Eigen::MatrixXd& modes) {
  for (Eigen::Index k = 0; k < modes.cols(); ++k) {
    Eigen::Index imax = 0;
    modes.col(k).cwiseAbs().maxCoeff(&imax);
    if (modes(imax, k) < 0.0) modes.col(k) *= -1.0;
  }
}

inline PodBasis compute_pod(const SnapshotSet& s, double rank_tol = 1e-12) {
  s.validate();
  PodBasis b;
  b.field = s.field;
  b.cell_volume = s.cell_volume;
  b.mean = compute_mean(s);
  const Eigen::MatrixXd centred = s.matrix.colwise() - b.mean;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centred, Eigen::ComputeThinU);
  b.raw_spectrum = svd.singularValues();
  const double s1 = b.raw_spectrum.size() ? b.raw_spectrum[0] : 0.0;
  if (!(s1 > 0.0)) throw DegenerateSnapshotError("all snapshots are equal (rank 0)");
  int rank = 0;
  while (rank < b.raw_spectrum.size() && b.raw_spectrum[rank] > rank_tol * s1) ++rank;
  b.singular_values = b.raw_spectrum.head(rank);
  b.all_modes = svd.matrixU().leftCols(rank) / std::sqrt(s.cell_volume);
  fix_mode_signs(b.all_modes);
  b.cutoff = rank;
  return b;
}

/// Fraction of the singular-value sum captured by the first n modes.
inline double energy(const PodBasis& b, int n) {
  if (n < 1 || n > b.rank()) {
    throw InvalidArgument("energy: n=" + std::to_string(n) + " outside [1, " +
                          std::to_string(b.rank()) + "]");
  }
  return b.singular_values.head(n).sum() / b.singular_values.sum();
}

/// Smallest n with energy(n) >= threshold.
inline int choose_cutoff(const PodBasis& b, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw InvalidArgument("threshold must be in (0, 1]");
  const double total = b.singular_values.sum();
  double acc = 0.0;
  for (int n = 1; n <= b.rank(); ++n) {
    acc += b.singular_values[n - 1];
    if (acc / total >= threshold) return n;
  }
  return b.rank();
}

/// Field-level projection c_k = <f - mean, phi_k>.
inline Eigen::VectorXd project(const Eigen::VectorXd& f, const PodBasis& b) {
  if (f.size() != b.size()) throw DimensionError("field length does not match basis");
  return b.cell_volume * (b.modes().transpose() * (f - b.mean));
}

inline Eigen::VectorXd reconstruct(const Eigen::VectorXd& c, const PodBasis& b) {
  if (c.size() != b.cutoff) throw DimensionError("coefficient count does not match cutoff");
  return b.modes() * c + b.mean;
}

/// Block-diagonal basis Phi = diag(Phi_x, Phi_T) with stacked mean [x_bar; T_bar].
class CombinedBasis {
 public:
  CombinedBasis() = default;

  CombinedBasis(Eigen::VectorXd mean_x, Eigen::MatrixXd modes_x, Eigen::VectorXd mean_T,
                Eigen::MatrixXd modes_T, double cell_volume)
      : cell_volume_(cell_volume) {
    const Eigen::Index N = mean_x.size();
    if (mean_T.size() != N || modes_x.rows() != N || modes_T.rows() != N) {
      throw DimensionError("moisture and temperature bases have different cell counts");
    }
    if (!(cell_volume > 0.0)) throw InvalidArgument("cell volume must be > 0");
    n_x_ = static_cast<int>(modes_x.cols());
    n_T_ = static_cast<int>(modes_T.cols());
    mean_.resize(2 * N);
    mean_ << mean_x, mean_T;
    phi_x_ = std::move(modes_x);
    phi_T_ = std::move(modes_T);
  }

  int n_x() const { return n_x_; }
  int n_T() const { return n_T_; }
  int order() const { return n_x_ + n_T_; }
  int cell_count() const { return static_cast<int>(phi_x_.rows()); }
  int state_size() const { return 2 * cell_count(); }
  double cell_volume() const { return cell_volume_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& modes_x() const { return phi_x_; }
  const Eigen::MatrixXd& modes_T() const { return phi_T_; }

  /// Dense 2N x n matrix.
  Eigen::MatrixXd phi() const {
    const int N = cell_count();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(2 * N, order());
    out.topLeftCorner(N, n_x_) = phi_x_;
    out.bottomRightCorner(N, n_T_) = phi_T_;
    return out;
  }

  /// Phi * C for a block of coefficient columns (n x k), plus the mean in every column.
  Eigen::MatrixXd reconstruct_many(const Eigen::MatrixXd& C) const {
    const int N = cell_count();
    Eigen::MatrixXd Z(2 * N, C.cols());
    Z.topRows(N).noalias() = phi_x_ * C.topRows(n_x_);
    Z.bottomRows(N).noalias() = phi_T_ * C.bottomRows(n_T_);
    Z.colwise() += mean_;
    return Z;
  }

  /// dV * Phi^T * V for a block of state-sized columns (no mean removal).
  Eigen::MatrixXd weighted_transpose(const Eigen::MatrixXd& V) const {
    const int N = cell_count();
    Eigen::MatrixXd C(order(), V.cols());
    C.topRows(n_x_).noalias() = cell_volume_ * (phi_x_.transpose() * V.topRows(N));
    C.bottomRows(n_T_).noalias() = cell_volume_ * (phi_T_.transpose() * V.bottomRows(N));
    return C;
  }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd phi_x_, phi_T_;
  int n_x_ = 0, n_T_ = 0;
  double cell_volume_ = 0.0;
};

inline CombinedBasis combine(const PodBasis& moisture, const PodBasis& temperature) {
  if (moisture.cell_volume != temperature.cell_volume) {
    throw DimensionError("moisture and temperature bases use different cell volumes");
  }
  return CombinedBasis(moisture.mean, moisture.modes(), temperature.mean, temperature.modes(),
                       moisture.cell_volume);
}

inline Eigen::VectorXd project(const Eigen::VectorXd& z, const CombinedBasis& b) {
  if (z.size() != b.state_size()) throw DimensionError("state length does not match basis");
  return b.weighted_transpose(z - b.mean());
}

inline Eigen::VectorXd reconstruct(const Eigen::VectorXd& c, const CombinedBasis& b) {
  if (c.size() != b.order()) throw DimensionError("coefficient count does not match basis order");
  return b.reconstruct_many(c);
}

}  // namespace dryobs
