#include "capdistill/projection.hpp"

#include <Eigen/Eigenvalues>

namespace capdistill {

Projection project_2d(const Eigen::MatrixXd& rows) {
  const Eigen::Index D = rows.rows();
  const Eigen::Index K = rows.cols();
  if (D < 2) throw DegenerateInput("projection needs at least two rows");
  if (K < 1) throw DegenerateInput("projection needs at least one column");

  const Eigen::RowVectorXd mean = rows.colwise().mean();
  const Eigen::MatrixXd centered = rows.rowwise() - mean;
  // Centering identical rows can leave rounding residue, so compare against
  // the data's own scale rather than exact zero.
  const double scale = rows.cwiseAbs().maxCoeff();
  if (centered.cwiseAbs().maxCoeff() <= 1e-12 * scale) throw DegenerateInput("all rows are identical");

  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(D - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");

  // Eigenvalues come back ascending.
  Projection p;
  p.components = Eigen::MatrixXd::Zero(K, 2);
  const Eigen::Index axes = K >= 2 ? 2 : 1;
  for (Eigen::Index a = 0; a < axes; ++a) {
    Eigen::VectorXd v = solver.eigenvectors().col(K - 1 - a);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    p.components.col(a) = v;
  }
  p.lambda1 = solver.eigenvalues()(K - 1);
  p.lambda2 = K >= 2 ? solver.eigenvalues()(K - 2) : 0.0;
  p.total_variance = cov.trace();
  p.coords = centered * p.components;
  return p;
}

}  // namespace capdistill
