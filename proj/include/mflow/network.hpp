#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>

#include "mflow/density.hpp"
#include "mflow/rng.hpp"

namespace mflow {

enum class Activation { ReLU, Abs };

inline double activate(Activation act, double z) {
    return act == Activation::ReLU ? (z > 0.0 ? z : 0.0) : std::fabs(z);
}

// sigma'(0) is fixed to 0 for both activations; the event has measure zero
// under a continuous bias density and any fixed subgradient serves the
// discretized flow.
inline double activate_grad(Activation act, double z) {
    if (act == Activation::ReLU) return z > 0.0 ? 1.0 : 0.0;
    return z > 0.0 ? 1.0 : (z < 0.0 ? -1.0 : 0.0);
}

/// Training data: m points in R^d with scalar labels.
struct Dataset {
    Eigen::MatrixXd X;  // m x d
    Eigen::VectorXd y;  // m

    int size() const { return static_cast<int>(X.rows()); }
    int dim() const { return static_cast<int>(X.cols()); }

    static Dataset from_1d(const Eigen::VectorXd& xs, const Eigen::VectorXd& ys);
    /// Throws unless all x_i are pairwise distinct.
    void require_distinct() const;
};

struct InitSpec {
    BiasDensity bias_density = BiasDensity::uniform(1.0);
    double a_scale = 0.0;  // multiplier on 1/sqrt(n) output-weight sampling; 0 = zero init
    double d_init = 0.0;
    std::uint64_t seed = 0;
};

/// Two-layer network f(x) = sum_k a_k sigma(w_k.x - b_k) + d with a frozen
/// copy of the parameters at initialization. Flattened parameter order is
/// (W row-major, b, a, d) everywhere: Jacobian columns, Hessian diagonals
/// and trajectory dumps all share it.
struct NetParams {
    Eigen::MatrixXd W;  // n x d
    Eigen::VectorXd b;  // n
    Eigen::VectorXd a;  // n
    double d_out = 0.0;

    Eigen::MatrixXd W0;
    Eigen::VectorXd b0;
    Eigen::VectorXd a0;
    double d_out0 = 0.0;

    Activation activation = Activation::ReLU;

    int width() const { return static_cast<int>(W.rows()); }
    int dim() const { return static_cast<int>(W.cols()); }
    int param_count() const { return width() * (dim() + 2) + 1; }

    Eigen::VectorXd flatten() const;
    Eigen::VectorXd flatten_anchor() const;
    void unflatten(const Eigen::VectorXd& theta);
};

/// Samples a width-n network; deterministic given spec.seed. Rows of W are
/// uniform on the unit sphere (a fair +-1 for d = 1), b from the bias
/// density, a = a_scale * N(0,1) / sqrt(n), d = d_init.
NetParams init_params(int n, int d, const InitSpec& spec, Activation activation);

double forward(const NetParams& net, const Eigen::VectorXd& x);
double forward1(const NetParams& net, double x);  // d = 1 convenience
Eigen::VectorXd forward_all(const NetParams& net, const Eigen::MatrixXd& X);

/// m x p Jacobian of the outputs with respect to the flattened parameters.
Eigen::MatrixXd jacobian(const NetParams& net, const Dataset& data);

/// Mean squared error L = (1/2m) sum (f(x_i) - y_i)^2 and its gradient
/// (1/m) J^T r in the flattened ordering.
double loss(const NetParams& net, const Dataset& data);
Eigen::VectorXd loss_grad(const NetParams& net, const Dataset& data);

/// CSV snapshot, one row per coordinate: index,block,value (17 significant digits).
std::string params_to_csv(const NetParams& net);

}  // namespace mflow
