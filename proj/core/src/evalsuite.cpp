#include "conrad/evalsuite.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace conrad {

FeatureSet FeatureSet::from_rows(const Eigen::MatrixXd& rows) {
  FeatureSet out{rows};
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const double n = rows.row(i).norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw InvalidArgument("feature row " + std::to_string(i) + " is zero or non-finite");
    }
    out.features.row(i) /= n;
  }
  return out;
}

FeatureSet FeatureSet::from_matrix(const FeatureMatrix& m) {
  Eigen::MatrixXd rows(m.rows, m.dim);
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.dim; ++j) rows(i, j) = m.data[i * m.dim + j];
  }
  return from_rows(rows);
}

FeatureSet FeatureSet::subset(const std::vector<std::size_t>& rows) const {
  FeatureSet out{Eigen::MatrixXd(rows.size(), features.cols())};
  for (std::size_t k = 0; k < rows.size(); ++k) out.features.row(k) = features.row(rows[k]);
  return out;
}

double feature_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw InvalidArgument("feature dimensions differ");
  return 1.0 - a.dot(b);
}

Eigen::MatrixXd distance_matrix(const FeatureSet& gt, const FeatureSet& rendered) {
  if (gt.features.cols() != rendered.features.cols()) throw InvalidArgument("feature dimensions differ");
  return Eigen::MatrixXd::Ones(gt.features.rows(), rendered.features.rows()) -
         gt.features * rendered.features.transpose();
}

double d_ref(const Eigen::VectorXd& ref_feature, const FeatureSet& rendered) {
  if (rendered.size() == 0) throw InvalidArgument("d_ref needs at least one rendered view");
  double sum = 0.0;
  for (Eigen::Index j = 0; j < rendered.features.rows(); ++j) {
    sum += feature_distance(ref_feature, rendered.features.row(j).transpose());
  }
  return sum / rendered.size();
}

double d_all(const FeatureSet& gt, const FeatureSet& rendered) {
  if (gt.size() == 0 || rendered.size() == 0) throw InvalidArgument("d_all needs non-empty feature sets");
  return distance_matrix(gt, rendered).mean();
}

Assignment linear_sum_assignment(const Eigen::MatrixXd& cost) {
  if (cost.rows() != cost.cols()) throw InvalidArgument("assignment needs a square cost matrix");
  if (!cost.allFinite()) throw InvalidArgument("assignment cost matrix has non-finite entries");
  const int n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials and matching; p[j] is the row matched to column j.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  Assignment out;
  out.column_of_row.assign(n, -1);
  for (int j = 1; j <= n; ++j) out.column_of_row[p[j] - 1] = j - 1;
  for (int i = 0; i < n; ++i) out.cost += cost(i, out.column_of_row[i]);
  return out;
}

double d_oracle(const FeatureSet& gt, const FeatureSet& rendered) {
  if (gt.size() != rendered.size() || gt.size() == 0) {
    throw InvalidArgument("d_oracle needs equally sized, non-empty feature sets");
  }
  return linear_sum_assignment(distance_matrix(gt, rendered)).cost / gt.size();
}

double angular_distance(double a, double b) {
  double d = std::fmod(std::abs(a - b), 2.0 * std::numbers::pi);
  if (d > std::numbers::pi) d = 2.0 * std::numbers::pi - d;
  return d;
}

std::vector<std::size_t> near_reference_filter(const std::vector<CameraPose>& poses, const CameraPose& ref,
                                               const NearReferenceBounds& bounds) {
  // Small slack so that poses written in degrees survive the round trip.
  constexpr double kSlack = 1e-9;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    if (std::abs(poses[i].elevation - ref.elevation) <= bounds.max_elevation_change + kSlack &&
        angular_distance(poses[i].azimuth, ref.azimuth) <= bounds.max_azimuth_change + kSlack) {
      keep.push_back(i);
    }
  }
  return keep;
}

std::vector<CameraPose> canonical_rig() {
  std::vector<CameraPose> poses;
  for (double el : {-10.0, 0.0, 10.0, 30.0}) {
    for (int k = 0; k < 17; ++k) poses.push_back({deg_to_rad(360.0 * k / 17.0), deg_to_rad(el), 3.2});
  }
  return poses;
}

EvalReport evaluate(const FeatureSet& gt, const FeatureSet& rendered, const Eigen::VectorXd& ref_feature,
                    const std::vector<CameraPose>& poses, const CameraPose& ref_pose) {
  if (gt.size() != poses.size() || rendered.size() != poses.size()) {
    throw InvalidArgument("feature sets must have one row per pose");
  }
  const auto metrics = [&](const FeatureSet& g, const FeatureSet& r) {
    return MetricSet{d_ref(ref_feature, r), d_all(g, r), d_oracle(g, r), g.size()};
  };
  EvalReport report;
  report.all_views = metrics(gt, rendered);
  const auto near = near_reference_filter(poses, ref_pose);
  if (!near.empty()) report.near_reference = metrics(gt.subset(near), rendered.subset(near));
  return report;
}

}  // namespace conrad
