#pragma once

#include <Eigen/Core>
#include <string>

namespace mflow {

/// Separable scalar potential phi used to build the network potential
/// Phi(theta) = sum_k phi(theta_k - anchor_k)              (unscaled)
/// Phi(theta) = n^-2 sum_k phi(n (theta_k - anchor_k))     (scaled)
///
/// Built-in families:
///   Quadratic        phi(x) = x^2
///   PowerPlusQuad    phi(x) = |x|^p + omega x^2,  p >= 2, omega >= 0
///   Hypentropy       phi(x) = x asinh(x/beta) - sqrt(x^2 + beta^2), beta > 0
///
/// PowerPlusQuad stores the un-normalized form in both modes. That is the
/// convention of the reference experiments (phi2 = |x|^3 + x^2,
/// phi3 = x^4 + x^2); dividing by 1 + omega rescales the mirror clock and the
/// objective by a constant and moves no minimizer.
struct Potential {
    enum class Kind { Quadratic, PowerPlusQuad, Hypentropy };
    enum class Mode { Unscaled, Scaled };

    Kind kind = Kind::Quadratic;
    Mode mode = Mode::Unscaled;
    double p = 2.0;      // PowerPlusQuad exponent
    double omega = 0.0;  // PowerPlusQuad quadratic weight
    double beta = 1.0;   // Hypentropy parameter

    static Potential quadratic(Mode mode = Mode::Unscaled);
    static Potential power_plus_quad(double p, double omega, Mode mode = Mode::Unscaled);
    static Potential hypentropy(double beta, Mode mode = Mode::Unscaled);

    bool scaled() const { return mode == Mode::Scaled; }

    std::string to_string() const;

    /// Parses "quadratic", "pow:p=<real>,omega=<real>", "hypentropy:beta=<real>",
    /// each optionally prefixed with "scaled:".
    static Potential parse(const std::string& text);
};

double phi_eval(const Potential& pot, double x);
double phi_grad(const Potential& pot, double x);
double phi_hess(const Potential& pot, double x);

/// Bregman divergence D_phi(x, y) = phi(x) - phi(y) - phi'(y) (x - y).
double bregman(const Potential& pot, double x, double y);

/// Solves phi'(x) = y by bracketed bisection followed by Newton polish;
/// the result satisfies |phi'(x) - y| <= 1e-12 * max(1, |y|).
double inverse_grad(const Potential& pot, double y);

/// Diagonal of the Hessian of the separable network potential.
/// Unscaled mode: entry k is phi''(theta_k - anchor_k).
/// Scaled mode:   entry k is phi''(n (theta_k - anchor_k)); the n^-2
/// prefactor of the scaled potential cancels against the chain rule.
Eigen::VectorXd hessian_diag(const Potential& pot, const Eigen::VectorXd& theta,
                             const Eigen::VectorXd& anchor, int n);

/// In-place variant used by the training loop.
void hessian_diag_into(const Potential& pot, const Eigen::VectorXd& theta,
                       const Eigen::VectorXd& anchor, int n, Eigen::VectorXd& out);

}  // namespace mflow
