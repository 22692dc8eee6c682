#include "mflow/repcost.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace mflow {

namespace {

Eigen::VectorXd symmetric_bgrid(double B, int M) {
    if (M < 4 || M % 2 != 0)
        throw std::invalid_argument("OutputWeightFunction: need an even M >= 4 so the grid is symmetric");
    Eigen::VectorXd g(M + 1);
    const double db = 2.0 * B / M;
    for (int j = 0; j <= M; ++j) g(j) = -B + j * db;
    return g;
}

// Piecewise-linear read of the interior second differences of h at b.
double hpp_at(const DiscreteFunction& h, const Eigen::VectorXd& hpp, double b) {
    const Grid& g = h.grid;
    const double dt = g.dt();
    // interior nodes run t_1 .. t_{N-1}
    double s = (b - g.node(1)) / dt;
    s = std::min(std::max(s, 0.0), static_cast<double>(g.N - 2));
    const int i = std::min(static_cast<int>(s), g.N - 3);
    const double frac = s - i;
    return (1.0 - frac) * hpp(i) + frac * hpp(i + 1);
}

// Trapezoid of h''(t) |t| over interior nodes inside (-B, B), matching the
// G1 quadrature nodes.
double c_h_integral(const DiscreteFunction& h, const Eigen::VectorXd& hpp,
                    const BiasDensity& density) {
    const Grid& g = h.grid;
    const double margin = g.dt() * 1e-9;
    double acc = 0.0;
    int first = -1, last = -1;
    for (int i = 1; i < g.N; ++i) {
        if (std::fabs(g.node(i)) < density.B - margin) {
            if (first < 0) first = i;
            last = i;
        }
    }
    for (int i = first; i <= last; ++i) {
        const double w = (i == first || i == last) ? 0.5 : 1.0;
        acc += w * hpp(i - 1) * std::fabs(g.node(i));
    }
    return acc * g.dt();
}

void check_grid_covers(const DiscreteFunction& h, const BiasDensity& density) {
    if (density.B > std::min(-h.grid.lo, h.grid.hi) + 1e-12)
        throw std::invalid_argument("repcost: function grid does not cover [-B, B]");
}

}  // namespace

OutputWeightFunction OutputWeightFunction::zero(double B, int M) {
    OutputWeightFunction a;
    a.bgrid = symmetric_bgrid(B, M);
    a.alpha_pos = Eigen::VectorXd::Zero(M + 1);
    a.alpha_neg = Eigen::VectorXd::Zero(M + 1);
    return a;
}

bool OutputWeightFunction::is_even(double tol) const {
    const int M = nodes() - 1;
    for (int j = 0; j <= M; ++j)
        if (std::fabs(alpha_pos(j) - alpha_neg(M - j)) > tol) return false;
    return true;
}

bool OutputWeightFunction::is_odd(double tol) const {
    const int M = nodes() - 1;
    for (int j = 0; j <= M; ++j)
        if (std::fabs(alpha_pos(j) + alpha_neg(M - j)) > tol) return false;
    return true;
}

std::string OutputWeightFunction::to_csv() const {
    std::ostringstream os;
    os << "b,alpha_pos,alpha_neg\n";
    char buf[64];
    for (int j = 0; j < nodes(); ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", bgrid(j));
        os << buf;
        std::snprintf(buf, sizeof(buf), "%.17g", alpha_pos(j));
        os << ',' << buf;
        std::snprintf(buf, sizeof(buf), "%.17g", alpha_neg(j));
        os << ',' << buf << '\n';
    }
    return os.str();
}

std::pair<OutputWeightFunction, OutputWeightFunction> decompose_even_odd(
    const OutputWeightFunction& alpha) {
    const int M = alpha.nodes() - 1;
    OutputWeightFunction even = alpha, odd = alpha;
    for (int j = 0; j <= M; ++j) {
        // reflection (w, b) -> (-w, -b) maps slice +- at node j to slice -+ at node M - j
        even.alpha_pos(j) = 0.5 * (alpha.alpha_pos(j) + alpha.alpha_neg(M - j));
        even.alpha_neg(j) = 0.5 * (alpha.alpha_neg(j) + alpha.alpha_pos(M - j));
        odd.alpha_pos(j) = 0.5 * (alpha.alpha_pos(j) - alpha.alpha_neg(M - j));
        odd.alpha_neg(j) = 0.5 * (alpha.alpha_neg(j) - alpha.alpha_pos(M - j));
    }
    return {even, odd};
}

OutputWeightFunction repcost_quadratic(const DiscreteFunction& h, const BiasDensity& density,
                                       int M) {
    check_grid_covers(h, density);
    const Eigen::VectorXd hpp = second_diff(h);

    const double S_h = h.slope_pos + h.slope_neg;
    const int i0 = h.grid.nearest_index(0.0);
    const double C_h = c_h_integral(h, hpp, density) - 2.0 * h.h(i0);
    const double odd_slope = C_h / density.mean_square();

    OutputWeightFunction a = OutputWeightFunction::zero(density.B, M);
    for (int j = 0; j < a.nodes(); ++j) {
        const double b = a.bgrid(j);
        const double p = density.pdf(b);
        if (!(p > 0.0))
            throw std::runtime_error("repcost_quadratic: vanishing density at an interior node");
        const double even = hpp_at(h, hpp, b) / p;
        const double odd = odd_slope * b + S_h;
        const double even_r = hpp_at(h, hpp, -b) / density.pdf(-b);
        const double odd_r = odd_slope * (-b) + S_h;
        a.alpha_pos(j) = even + odd;
        a.alpha_neg(j) = even_r - odd_r;  // alpha(-1,b) = alpha+(1,-b) - alpha-(1,-b)
    }
    return a;
}

OutputWeightFunction repcost_abs(const DiscreteFunction& h, const BiasDensity& density, int M) {
    check_grid_covers(h, density);
    const double g2_res = std::fabs(h.slope_pos + h.slope_neg);
    const int ip = h.grid.nearest_index(density.B);
    const int im = h.grid.nearest_index(-density.B);
    const double g3_res =
        std::fabs(density.B * (h.slope_pos - h.slope_neg) - (h.h(ip) + h.h(im)));
    if (g2_res > 1e-6 || g3_res > 1e-6)
        throw std::invalid_argument(
            "repcost_abs: h is not in the absolute-value class (G2 residual " +
            std::to_string(g2_res) + ", G3 residual " + std::to_string(g3_res) + ")");

    const Eigen::VectorXd hpp = second_diff(h);
    OutputWeightFunction a = OutputWeightFunction::zero(density.B, M);
    for (int j = 0; j < a.nodes(); ++j) {
        const double b = a.bgrid(j);
        a.alpha_pos(j) = hpp_at(h, hpp, b) / (2.0 * density.pdf(b));
        a.alpha_neg(j) = hpp_at(h, hpp, -b) / (2.0 * density.pdf(-b));
    }
    return a;
}

double eval_infinite_network(const OutputWeightFunction& alpha, const BiasDensity& density,
                             Activation activation, double x) {
    const int M = alpha.nodes() - 1;
    const double db = (alpha.bgrid(M) - alpha.bgrid(0)) / M;
    double acc = 0.0;
    for (int j = 0; j <= M; ++j) {
        const double b = alpha.bgrid(j);
        const double w = (j == 0 || j == M) ? 0.5 : 1.0;
        const double v = alpha.alpha_pos(j) * activate(activation, x - b) +
                         alpha.alpha_neg(j) * activate(activation, -x - b);
        acc += w * v * density.pdf(b);
    }
    return 0.5 * acc * db;
}

namespace {

template <typename F>
double slice_integral(const OutputWeightFunction& alpha, const BiasDensity& density, F&& f) {
    const int M = alpha.nodes() - 1;
    const double db = (alpha.bgrid(M) - alpha.bgrid(0)) / M;
    double acc = 0.0;
    for (int j = 0; j <= M; ++j) {
        const double w = (j == 0 || j == M) ? 0.5 : 1.0;
        acc += w * (f(alpha.alpha_pos(j)) + f(alpha.alpha_neg(j))) * density.pdf(alpha.bgrid(j));
    }
    return 0.5 * acc * db;
}

}  // namespace

double cost_quadratic(const OutputWeightFunction& alpha, const BiasDensity& density) {
    return slice_integral(alpha, density, [](double v) { return v * v; });
}

double cost_bregman(const OutputWeightFunction& alpha, const BiasDensity& density,
                    const Potential& pot) {
    return slice_integral(alpha, density, [&](double v) { return bregman(pot, v, 0.0); });
}

}  // namespace mflow
