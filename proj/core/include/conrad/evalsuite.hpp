#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "conrad/common.hpp"
#include "conrad/io.hpp"
#include "conrad/scene.hpp"

namespace conrad {

/// Unit-normalized feature rows, one per view.
struct FeatureSet {
  Eigen::MatrixXd features;  // N x D

  std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
  /// Normalizes every row; a zero row is rejected.
  static FeatureSet from_rows(const Eigen::MatrixXd& rows);
  static FeatureSet from_matrix(const FeatureMatrix& m);
  FeatureSet subset(const std::vector<std::size_t>& rows) const;
};

/// 1 - <a, b> for unit vectors.
double feature_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// D(i, j) = feature_distance(gt_i, rendered_j).
Eigen::MatrixXd distance_matrix(const FeatureSet& gt, const FeatureSet& rendered);

double d_ref(const Eigen::VectorXd& ref_feature, const FeatureSet& rendered);
double d_all(const FeatureSet& gt, const FeatureSet& rendered);

struct Assignment {
  std::vector<int> column_of_row;
  double cost = 0.0;
};

/// Minimum-cost perfect matching on a square matrix (Kuhn-Munkres with
/// potentials, O(N^3)). Non-finite or non-square input is rejected.
Assignment linear_sum_assignment(const Eigen::MatrixXd& cost);

/// Mean per-pair cost of the optimal assignment between the two sets.
double d_oracle(const FeatureSet& gt, const FeatureSet& rendered);

struct NearReferenceBounds {
  double max_elevation_change = deg_to_rad(15.0);
  double max_azimuth_change = deg_to_rad(45.0);
};

/// Circular |a - b| on angles, in [0, pi].
double angular_distance(double a, double b);

std::vector<std::size_t> near_reference_filter(const std::vector<CameraPose>& poses, const CameraPose& ref,
                                               const NearReferenceBounds& bounds = {});

/// Ground-truth rig: elevation rings at -10, 0, 10 and 30 degrees, 17 azimuths
/// each starting at 0, radius 3.2 (68 poses).
std::vector<CameraPose> canonical_rig();

struct MetricSet {
  double d_ref = 0.0;
  double d_all = 0.0;
  double d_oracle = 0.0;
  std::size_t count = 0;
};

struct EvalReport {
  MetricSet all_views;
  MetricSet near_reference;
};

/// Both Table-1 column groups. gt and rendered rows correspond to `poses`.
EvalReport evaluate(const FeatureSet& gt, const FeatureSet& rendered, const Eigen::VectorXd& ref_feature,
                    const std::vector<CameraPose>& poses, const CameraPose& ref_pose);

}  // namespace conrad
