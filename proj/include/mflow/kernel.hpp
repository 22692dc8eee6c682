#pragma once

#include <Eigen/Core>
#include <string>
#include <utility>
#include <vector>

#include "mflow/network.hpp"
#include "mflow/potential.hpp"
#include "mflow/train.hpp"

namespace mflow {

/// Lazy/kernel-regime diagnostics of one training run.
struct KernelReport {
    Eigen::MatrixXd H0;
    Eigen::MatrixXd H_final;
    std::vector<std::pair<long, double>> lambda_min_series;  // (step, lambda_min(H(step)))
    double param_drift_sup = 0.0;      // max over recorded snapshots of ||theta - anchor||_inf
    double kernel_drift_spectral = 0.0;  // ||H_final - H0||_2

    std::string to_json() const;
    std::string lambda_series_csv() const;
};

/// Time-varying kernel H = (1/n) J diag(1/hessian_diag) J^T; symmetric PSD.
Eigen::MatrixXd kernel_matrix(const NetParams& net, const Potential& pot, const Dataset& data);

/// Width-limit kernel of the output-weight features for d = 1:
/// G_ij = E[sigma(W x_i - B) sigma(W x_j - B)] over W fair on {-1,+1} and
/// B ~ density, by composite trapezoid quadrature with `nodes_per_sign`
/// nodes per sign slice. Returns (G, lambda_min(G)); the smallest eigenvalue
/// is positive for distinct data with |x_i| in the support.
std::pair<Eigen::MatrixXd, double> analytic_kernel(const Dataset& data, const BiasDensity& density,
                                                   Activation activation, int nodes_per_sign = 2001);

/// Smallest eigenvalue of a symmetric matrix via the cyclic Jacobi routine.
double min_eigenvalue(const Eigen::MatrixXd& M);

/// Spectral norm of a symmetric matrix (largest |eigenvalue|, same routine).
double spectral_norm_sym(const Eigen::MatrixXd& M);

/// Drift metrics over the recorded snapshots of a trajectory.
KernelReport drift_report(const Trajectory& traj, const NetParams& like, const Potential& pot,
                          const Dataset& data);

}  // namespace mflow
