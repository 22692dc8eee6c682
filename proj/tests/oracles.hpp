// Independent reference implementations used only by tests. Each one takes a
// different algorithmic route from the library code it checks: full-pivot
// Gauss-Jordan vs partial-pivot LU, characteristic-polynomial bisection vs
// Jacobi rotations, the textbook tridiagonal spline vs the discretized KKT
// solve, central finite differences vs analytic derivatives.
#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

#include "mflow/variational.hpp"

namespace oracle {

// determinant via hand-rolled LU with partial pivoting (sign tracked)
double det_lu(Eigen::MatrixXd A);

// smallest eigenvalue of a symmetric matrix by sign bisection of
// det(M - lambda I); assumes the smallest eigenvalue is simple
double min_eig_charpoly(const Eigen::MatrixXd& M);

// dense linear solve by Gauss-Jordan elimination with full pivoting
Eigen::VectorXd solve_full_pivot(Eigen::MatrixXd A, Eigen::VectorXd b);

// independently assembled and solved discretization of the Theorem-1 style
// quadratic problems; mode must be UnscaledReLU or SplineG1Only
Eigen::VectorXd kkt_reference(const mflow::VariationalSpec& spec);

// classic natural cubic spline (second-derivative form, Thomas solve)
struct NaturalSpline {
    std::vector<double> x, y, M;  // knots, values, second derivatives
    double eval(double t) const;
    static NaturalSpline fit(const std::vector<double>& xs, const std::vector<double>& ys);
};

// central finite difference (f(x+h) - f(x-h)) / 2h
double fd(const std::function<double(double)>& f, double x, double h = 1e-6);

}  // namespace oracle
