#pragma once

#include <Eigen/Core>
#include <string>
#include <utility>

#include "mflow/density.hpp"
#include "mflow/network.hpp"
#include "mflow/potential.hpp"
#include "mflow/variational.hpp"

namespace mflow {

/// Infinite-width output-weight coefficient alpha(w, b) on {-1,+1} x [-B, B],
/// stored as the two sign slices on a symmetric uniform b-grid.
struct OutputWeightFunction {
    Eigen::VectorXd bgrid;      // M+1 nodes, bgrid(j) = -B + j * 2B/M
    Eigen::VectorXd alpha_pos;  // alpha(+1, b_j)
    Eigen::VectorXd alpha_neg;  // alpha(-1, b_j)

    int nodes() const { return static_cast<int>(bgrid.size()); }
    double B() const { return bgrid(bgrid.size() - 1); }

    static OutputWeightFunction zero(double B, int M = 2000);

    /// alpha(w, b) = alpha(-w, -b) node-wise within tol
    bool is_even(double tol = 1e-12) const;
    /// alpha(w, b) = -alpha(-w, -b) node-wise within tol
    bool is_odd(double tol = 1e-12) const;

    std::string to_csv() const;  // b, alpha(+1,b), alpha(-1,b)
};

/// Unique split alpha = even + odd under (w, b) -> (-w, -b); recombination
/// is exact by construction.
std::pair<OutputWeightFunction, OutputWeightFunction> decompose_even_odd(
    const OutputWeightFunction& alpha);

/// Closed-form minimal quadratic-cost representation of h as a ReLU
/// coefficient function:
///   even part  alpha+(1, b) = h''(b) / p_B(b)
///   odd part   alpha-(1, b) = (C_h / E[B^2]) b + S_h,
/// with S_h = h'(+inf) + h'(-inf) and C_h = int h''(b) |b| db - 2 h(0).
OutputWeightFunction repcost_quadratic(const DiscreteFunction& h, const BiasDensity& density,
                                       int M = 2000);

/// Minimal-cost representation of h as an absolute-value network,
/// alpha(1, b) = h''(b) / (2 p_B(b)); the same for every Bregman cost since
/// the representation constraint pins alpha uniquely. Requires h in the
/// absolute-value class: G2(h) and G3(h) residuals below 1e-6.
OutputWeightFunction repcost_abs(const DiscreteFunction& h, const BiasDensity& density,
                                 int M = 2000);

/// g(x) = (1/2) int [alpha(1,b) sigma(x-b) + alpha(-1,b) sigma(-x-b)] p_B(b) db
/// by composite trapezoid on the alpha grid.
double eval_infinite_network(const OutputWeightFunction& alpha, const BiasDensity& density,
                             Activation activation, double x);

/// int alpha^2 dmu and int D_phi(alpha, 0) dmu over both sign slices with
/// weight p_B / 2.
double cost_quadratic(const OutputWeightFunction& alpha, const BiasDensity& density);
double cost_bregman(const OutputWeightFunction& alpha, const BiasDensity& density,
                    const Potential& pot);

}  // namespace mflow
