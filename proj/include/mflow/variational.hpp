#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "mflow/density.hpp"
#include "mflow/network.hpp"
#include "mflow/potential.hpp"

namespace mflow {

/// Uniform grid t_0 < ... < t_N on [lo, hi].
struct Grid {
    double lo = -1.5;
    double hi = 1.5;
    int N = 500;

    static Grid standard() { return Grid{}; }  // 501 nodes on [-1.5, 1.5]

    double dt() const { return (hi - lo) / N; }
    double node(int i) const { return lo + i * dt(); }
    int size() const { return N + 1; }
    int nearest_index(double x) const;
    void validate() const;  // lo < hi, N >= 4
};

/// Grid function with the two asymptotic slopes h'(-inf), h'(+inf).
struct DiscreteFunction {
    Grid grid;
    Eigen::VectorXd h;  // N+1 node values
    double slope_neg = 0.0;
    double slope_pos = 0.0;

    std::string to_csv() const;  // t,h rows
};

/// Interior second differences h''_i = (h_{i+1} - 2h_i + h_{i-1}) / dt^2,
/// i = 1..N-1. The stencil is exact on cubics.
Eigen::VectorXd second_diff(const DiscreteFunction& f);

/// Discretized functionals of the unscaled variational problem:
///   G1 = int (h'')^2 / p_B   (trapezoid over interior nodes inside (-B, B))
///   G2 = (h'(+inf) + h'(-inf))^2
///   G3 = (1/E[B^2]) (B (h'(+inf) - h'(-inf)) - (h(B) + h(-B)))^2,
/// with h(+-B) read at the nearest grid nodes.
double eval_G1(const DiscreteFunction& f, const BiasDensity& density);
double eval_G2(const DiscreteFunction& f);
double eval_G3(const DiscreteFunction& f, const BiasDensity& density);

enum class VariationalMode { UnscaledReLU, ScaledAbs, SplineG1Only };

struct VariationalSpec {
    Dataset data;  // d = 1; x-coordinates are snapped to the nearest grid node
    BiasDensity density = BiasDensity::uniform(1.0);
    Grid grid = Grid::standard();
    VariationalMode mode = VariationalMode::UnscaledReLU;

    /// Bregman potential for ScaledAbs. Ignored by the other modes.
    Potential pot = Potential::quadratic();

    /// Experimental |q|^p + omega q^2 integrand with p in [1,2) for the
    /// ScaledAbs objective (solved by descent with relaxed 1e-6 tolerance).
    /// lp_p = 0 selects the regular potential-driven objective.
    double lp_p = 0.0;
    double lp_omega = 0.0;

    /// Network outputs f(x_i, anchor) subtracted from the labels on the
    /// right-hand side; empty means zero (the default zero-output init).
    Eigen::VectorXd init_values;

    void validate() const;
};

struct SolveInfo {
    double objective = 0.0;
    double kkt_residual = 0.0;         // quadratic (KKT) path
    double constraint_residual = 0.0;  // max |A u - c|
    long iterations = 0;
    double grad_norm = 0.0;            // reduced gradient at exit (Newton path)
};

/// Theorem-1 objective G1 + G2 + G3 subject to interpolation and
/// tail-linearity; solved by assembling the KKT system and eliminating with
/// partial pivoting (plus one step of iterative refinement).
DiscreteFunction solve_unscaled(const VariationalSpec& spec, SolveInfo* info = nullptr);

/// Theorem-2 Bregman objective subject to the same constraints plus
/// G2 = G3 = 0; equality constraints are eliminated by an orthonormal
/// null-space basis and the reduced problem is minimized by damped Newton
/// with backtracking (gradient descent fallback near singular Hessians).
DiscreteFunction solve_scaled(const VariationalSpec& spec, SolveInfo* info = nullptr);

/// G1 alone subject to interpolation and natural boundary conditions
/// (h'' = 0 outside the data hull); same KKT path as solve_unscaled.
DiscreteFunction solve_spline(const VariationalSpec& spec, SolveInfo* info = nullptr);

/// Equality constraints A u = c of a spec over u = [h_0..h_N, s-, s+],
/// exposed for oracles and feasible-perturbation tests.
void variational_constraints(const VariationalSpec& spec, Eigen::MatrixXd& A, Eigen::VectorXd& c);

/// Objective value of the spec's mode at a given function.
double variational_objective(const VariationalSpec& spec, const DiscreteFunction& f);

/// Orthonormal basis of the null space of A (columns), via Householder QR
/// of A^T. Throws if A is row-rank deficient.
Eigen::MatrixXd nullspace_basis(const Eigen::MatrixXd& A);

/// Snapped data node indices (throws on duplicates after snapping).
std::vector<int> snapped_indices(const Dataset& data, const Grid& grid);

std::string solve_info_json(const DiscreteFunction& f, const SolveInfo& info);

}  // namespace mflow
