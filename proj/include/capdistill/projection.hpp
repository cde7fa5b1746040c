#pragma once

#include <stdexcept>

#include <Eigen/Core>

namespace capdistill {

class DegenerateInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Projection {
  Eigen::MatrixXd coords;      // D x 2
  Eigen::MatrixXd components;  // K x 2, unit columns
  double lambda1 = 0.0;        // variance along the first axis
  double lambda2 = 0.0;
  double total_variance = 0.0;  // trace of the covariance
};

/// Mean-centred PCA onto the top two principal axes of the sample
/// covariance (divided by D - 1). Each axis is flipped so its
/// largest-magnitude loading is positive, which makes the output
/// deterministic. With a single input column the second axis is zero.
Projection project_2d(const Eigen::MatrixXd& rows);

}  // namespace capdistill
