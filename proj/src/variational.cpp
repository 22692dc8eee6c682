#include "mflow/variational.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

namespace mflow {

int Grid::nearest_index(double x) const {
    const int i = static_cast<int>(std::lround((x - lo) / dt()));
    return std::clamp(i, 0, N);
}

void Grid::validate() const {
    if (!(lo < hi)) throw std::invalid_argument("Grid: lo must be < hi");
    if (N < 4) throw std::invalid_argument("Grid: need N >= 4");
}

Eigen::VectorXd second_diff(const DiscreteFunction& f) {
    const int N = f.grid.N;
    const double inv_dt2 = 1.0 / (f.grid.dt() * f.grid.dt());
    Eigen::VectorXd out(N - 1);
    for (int i = 1; i < N; ++i) out(i - 1) = (f.h(i + 1) - 2.0 * f.h(i) + f.h(i - 1)) * inv_dt2;
    return out;
}

namespace {

// Interior nodes strictly inside the bias support, with their trapezoid
// weights (these carry the dt factor).
struct SupportNodes {
    std::vector<int> idx;
    std::vector<double> weight;
    std::vector<double> pdf;
};

SupportNodes support_nodes(const Grid& grid, const BiasDensity& density) {
    SupportNodes s;
    const double margin = grid.dt() * 1e-9;
    for (int i = 1; i < grid.N; ++i) {
        const double t = grid.node(i);
        if (std::fabs(t) < density.B - margin) {
            s.idx.push_back(i);
            s.pdf.push_back(density.pdf(t));
        }
    }
    s.weight.assign(s.idx.size(), grid.dt());
    if (!s.idx.empty()) {
        s.weight.front() *= 0.5;
        s.weight.back() *= 0.5;
    }
    return s;
}

int boundary_node(const Grid& grid, double B, const char* side) {
    if (B < grid.lo - 1e-12 || B > grid.hi + 1e-12)
        throw std::invalid_argument(std::string("eval_G3: +-B outside the grid (") + side + ")");
    return grid.nearest_index(B);
}

}  // namespace

double eval_G1(const DiscreteFunction& f, const BiasDensity& density) {
    const Eigen::VectorXd hpp = second_diff(f);
    const SupportNodes sup = support_nodes(f.grid, density);
    double acc = 0.0;
    for (std::size_t k = 0; k < sup.idx.size(); ++k) {
        const double v = hpp(sup.idx[k] - 1);
        acc += sup.weight[k] * v * v / sup.pdf[k];
    }
    return acc;
}

double eval_G2(const DiscreteFunction& f) {
    const double s = f.slope_pos + f.slope_neg;
    return s * s;
}

double eval_G3(const DiscreteFunction& f, const BiasDensity& density) {
    const double B = density.B;
    const int ip = boundary_node(f.grid, B, "+B");
    const int im = boundary_node(f.grid, -B, "-B");
    const double L = B * (f.slope_pos - f.slope_neg) - (f.h(ip) + f.h(im));
    return L * L / density.mean_square();
}

std::vector<int> snapped_indices(const Dataset& data, const Grid& grid) {
    std::vector<int> idx(data.size());
    double worst = 0.0;
    for (int k = 0; k < data.size(); ++k) {
        idx[k] = grid.nearest_index(data.X(k, 0));
        worst = std::max(worst, std::fabs(grid.node(idx[k]) - data.X(k, 0)));
    }
    if (worst > 0.5 * grid.dt() * 1e-6)
        std::fprintf(stderr,
                     "[mflow] note: data snapped to grid nodes, worst offset %.3g (dt = %.3g)\n",
                     worst, grid.dt());
    std::set<int> seen(idx.begin(), idx.end());
    if (seen.size() != idx.size())
        throw std::invalid_argument("variational: duplicate data indices after snapping");
    return idx;
}

void VariationalSpec::validate() const {
    grid.validate();
    if (data.dim() != 1) throw std::invalid_argument("variational: requires d = 1 data");
    if (data.size() == 0) throw std::invalid_argument("variational: empty dataset");
    data.require_distinct();
    for (int k = 0; k < data.size(); ++k) {
        const double x = data.X(k, 0);
        if (std::fabs(x) > density.B + 1e-12)
            throw std::invalid_argument("variational: |x_i| outside supp(p_B)");
        if (x < grid.lo - 1e-12 || x > grid.hi + 1e-12)
            throw std::invalid_argument("variational: x_i outside the grid hull");
    }
    if (init_values.size() != 0 && init_values.size() != data.size())
        throw std::invalid_argument("variational: init_values length mismatch");
    if (lp_p != 0.0 && !(lp_p >= 1.0 && lp_p < 2.0))
        throw std::invalid_argument("variational: lp_p must lie in [1, 2) (or 0 to disable)");
}

void variational_constraints(const VariationalSpec& spec, Eigen::MatrixXd& A, Eigen::VectorXd& c) {
    spec.validate();
    const Grid& g = spec.grid;
    const int N = g.N;
    const int nu = N + 3;  // h_0..h_N, s-, s+
    const int s_neg = N + 1, s_pos = N + 2;
    const double dt = g.dt();

    const std::vector<int> idx = snapped_indices(spec.data, g);
    const int i_first = *std::min_element(idx.begin(), idx.end());
    const int i_last = *std::max_element(idx.begin(), idx.end());

    std::vector<Eigen::RowVectorXd> rows;
    std::vector<double> rhs;
    auto add_row = [&](const Eigen::RowVectorXd& r, double v) {
        rows.push_back(r);
        rhs.push_back(v);
    };

    // interpolation at snapped nodes
    for (int k = 0; k < spec.data.size(); ++k) {
        Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(nu);
        r(idx[k]) = 1.0;
        const double f0 = spec.init_values.size() ? spec.init_values(k) : 0.0;
        add_row(r, spec.data.y(k) - f0);
    }

    if (spec.mode == VariationalMode::SplineG1Only) {
        // natural boundary: h'' = 0 outside the data hull, and no curvature
        // outside the bias support inside the hull either
        const double margin = dt * 1e-9;
        for (int i = 1; i < N; ++i) {
            const bool outside_hull = i < i_first || i > i_last;
            const bool outside_support = std::fabs(g.node(i)) >= spec.density.B - margin;
            if (outside_hull || outside_support) {
                Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(nu);
                r(i - 1) = 1.0;
                r(i) = -2.0;
                r(i + 1) = 1.0;
                add_row(r, 0.0);
            }
        }
        // pin the slope fields to the boundary differences
        Eigen::RowVectorXd rneg = Eigen::RowVectorXd::Zero(nu);
        rneg(0) = 1.0;
        rneg(1) = -1.0;
        rneg(s_neg) = dt;
        add_row(rneg, 0.0);
        Eigen::RowVectorXd rpos = Eigen::RowVectorXd::Zero(nu);
        rpos(N - 1) = 1.0;
        rpos(N) = -1.0;
        rpos(s_pos) = dt;
        add_row(rpos, 0.0);
    } else {
        // tail linearity: slope s- up to the leftmost data node, slope s+
        // from the rightmost data node on
        for (int j = 1; j <= i_first; ++j) {
            Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(nu);
            r(j) = 1.0;
            r(j - 1) = -1.0;
            r(s_neg) = -dt;
            add_row(r, 0.0);
        }
        for (int j = std::max(i_last, i_first + 1); j <= N; ++j) {
            Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(nu);
            r(j) = 1.0;
            r(j - 1) = -1.0;
            r(s_pos) = -dt;
            add_row(r, 0.0);
        }
        // If the leftmost data node snapped outside the open support, its
        // curvature would be neither penalized nor constrained; close the
        // gap so that supp(h'') stays inside supp(p_B).
        const double margin = dt * 1e-9;
        if (std::fabs(g.node(i_first)) >= spec.density.B - margin && i_first + 1 < i_last) {
            Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(nu);
            r(i_first + 1) = 1.0;
            r(i_first) = -1.0;
            r(s_neg) = -dt;
            add_row(r, 0.0);
        }
        if (spec.mode == VariationalMode::ScaledAbs) {
            // G2(h) = 0 and G3(h) = 0 restrict to the absolute-value class
            Eigen::RowVectorXd r2 = Eigen::RowVectorXd::Zero(nu);
            r2(s_neg) = 1.0;
            r2(s_pos) = 1.0;
            add_row(r2, 0.0);
            const double B = spec.density.B;
            Eigen::RowVectorXd r3 = Eigen::RowVectorXd::Zero(nu);
            r3(s_pos) = B;
            r3(s_neg) = -B;
            r3(boundary_node(g, B, "+B")) -= 1.0;
            r3(boundary_node(g, -B, "-B")) -= 1.0;
            add_row(r3, 0.0);
        }
    }

    A.resize(static_cast<int>(rows.size()), nu);
    c.resize(static_cast<int>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        A.row(static_cast<int>(r)) = rows[r];
        c(static_cast<int>(r)) = rhs[r];
    }
}

namespace {

DiscreteFunction make_function(const VariationalSpec& spec, const Eigen::VectorXd& u) {
    DiscreteFunction f;
    f.grid = spec.grid;
    f.h = u.head(spec.grid.N + 1);
    f.slope_neg = u(spec.grid.N + 1);
    f.slope_pos = u(spec.grid.N + 2);
    return f;
}

// Quadratic form of G1 (+ G2 + G3 unless spline mode) as u^T Q u.
Eigen::MatrixXd quadratic_form(const VariationalSpec& spec) {
    const Grid& g = spec.grid;
    const int N = g.N;
    const int nu = N + 3;
    const double dt = g.dt();
    const double inv_dt2 = 1.0 / (dt * dt);

    Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(nu, nu);
    const SupportNodes sup = support_nodes(g, spec.density);
    for (std::size_t k = 0; k < sup.idx.size(); ++k) {
        const int i = sup.idx[k];
        const double w = sup.weight[k] / sup.pdf[k];
        const double st[3] = {inv_dt2, -2.0 * inv_dt2, inv_dt2};
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) Q(i - 1 + a, i - 1 + b) += w * st[a] * st[b];
    }
    if (spec.mode == VariationalMode::UnscaledReLU) {
        const int s_neg = N + 1, s_pos = N + 2;
        Eigen::VectorXd g2 = Eigen::VectorXd::Zero(nu);
        g2(s_neg) = 1.0;
        g2(s_pos) = 1.0;
        Q += g2 * g2.transpose();

        const double B = spec.density.B;
        Eigen::VectorXd g3 = Eigen::VectorXd::Zero(nu);
        g3(s_pos) = B;
        g3(s_neg) = -B;
        g3(boundary_node(g, B, "+B")) -= 1.0;
        g3(boundary_node(g, -B, "-B")) -= 1.0;
        Q += g3 * g3.transpose() / spec.density.mean_square();
    }
    return Q;
}

DiscreteFunction solve_kkt(const VariationalSpec& spec, SolveInfo* info) {
    Eigen::MatrixXd A;
    Eigen::VectorXd c;
    variational_constraints(spec, A, c);
    const Eigen::MatrixXd Q = quadratic_form(spec);

    const int nu = static_cast<int>(Q.rows());
    const int k = static_cast<int>(A.rows());
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nu + k, nu + k);
    K.topLeftCorner(nu, nu) = 2.0 * Q;
    K.topRightCorner(nu, k) = A.transpose();
    K.bottomLeftCorner(k, nu) = A;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nu + k);
    rhs.tail(k) = c;

    Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
    Eigen::VectorXd sol = lu.solve(rhs);
    sol += lu.solve(rhs - K * sol);  // one step of iterative refinement

    const double kkt_res = (K * sol - rhs).cwiseAbs().maxCoeff();
    if (!sol.allFinite() || kkt_res > 1e-6)
        throw std::runtime_error(
            "variational: singular or ill-conditioned KKT system (residual " +
            std::to_string(kkt_res) + "); duplicate data indices?");

    const Eigen::VectorXd u = sol.head(nu);
    if (info) {
        info->kkt_residual = kkt_res;
        info->constraint_residual = (A * u - c).cwiseAbs().maxCoeff();
        info->iterations = 1;
        DiscreteFunction f = make_function(spec, u);
        info->objective = variational_objective(spec, f);
        return f;
    }
    return make_function(spec, u);
}

// Bregman integrand psi(q) = D_phi(q, 0) and derivatives. The experimental
// |q|^p + omega q^2 family for p in [1, 2) is epsilon-smoothed so the same
// Newton machinery applies; raw descent cannot reach even the relaxed
// tolerance on this stencil-conditioned problem.
struct Integrand {
    bool use_lp = false;
    Potential pot;
    double p = 0.0, omega = 0.0;
    static constexpr double kEps2 = 1e-16;  // |q| ~ sqrt(q^2 + 1e-16)

    double value(double q) const {
        if (!use_lp) return bregman(pot, q, 0.0);
        return std::pow(q * q + kEps2, 0.5 * p) + omega * q * q;
    }
    double grad(double q) const {
        if (!use_lp) return phi_grad(pot, q) - phi_grad(pot, 0.0);
        return p * q * std::pow(q * q + kEps2, 0.5 * p - 1.0) + 2.0 * omega * q;
    }
    double hess(double q) const {
        if (!use_lp) return phi_hess(pot, q);
        const double r2 = q * q + kEps2;
        return p * std::pow(r2, 0.5 * p - 1.0) * (1.0 + (p - 2.0) * q * q / r2) + 2.0 * omega;
    }
    double tolerance() const { return use_lp ? 1e-6 : 1e-9; }
};

}  // namespace

DiscreteFunction solve_unscaled(const VariationalSpec& spec, SolveInfo* info) {
    if (spec.mode != VariationalMode::UnscaledReLU)
        throw std::invalid_argument("solve_unscaled: spec.mode must be UnscaledReLU");
    return solve_kkt(spec, info);
}

DiscreteFunction solve_spline(const VariationalSpec& spec, SolveInfo* info) {
    if (spec.mode != VariationalMode::SplineG1Only)
        throw std::invalid_argument("solve_spline: spec.mode must be SplineG1Only");
    return solve_kkt(spec, info);
}

Eigen::MatrixXd nullspace_basis(const Eigen::MatrixXd& A) {
    const int nu = static_cast<int>(A.cols());
    const int k = static_cast<int>(A.rows());
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A.transpose());
    if (qr.rank() < k)
        throw std::runtime_error("variational: constraint matrix is row-rank deficient");
    const Eigen::MatrixXd Qfull = qr.householderQ();
    return Qfull.rightCols(nu - qr.rank());
}

DiscreteFunction solve_scaled(const VariationalSpec& spec, SolveInfo* info) {
    if (spec.mode != VariationalMode::ScaledAbs)
        throw std::invalid_argument("solve_scaled: spec.mode must be ScaledAbs");

    Eigen::MatrixXd A;
    Eigen::VectorXd c;
    variational_constraints(spec, A, c);
    const Eigen::MatrixXd Z = nullspace_basis(A);

    // minimum-norm particular solution
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
    const Eigen::VectorXd u_part = cod.solve(c);

    const Grid& g = spec.grid;
    const SupportNodes sup = support_nodes(g, spec.density);
    const int ns = static_cast<int>(sup.idx.size());
    const int nv = static_cast<int>(Z.cols());
    const double inv_dt2 = 1.0 / (g.dt() * g.dt());

    // D maps u to the Bregman arguments q_i = h''_i / (2 p_i) on support nodes
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(ns, g.N + 3);
    for (int r = 0; r < ns; ++r) {
        const int i = sup.idx[r];
        const double scale = inv_dt2 / (2.0 * sup.pdf[r]);
        D(r, i - 1) = scale;
        D(r, i) = -2.0 * scale;
        D(r, i + 1) = scale;
    }
    const Eigen::MatrixXd DZ = D * Z;
    const Eigen::VectorXd q_part = D * u_part;

    Integrand integrand;
    if (spec.lp_p != 0.0) {
        integrand.use_lp = true;
        integrand.p = spec.lp_p;
        integrand.omega = spec.lp_omega;
    } else {
        integrand.pot = spec.pot;
    }

    Eigen::VectorXd cw(ns);  // trapezoid weight times density
    for (int r = 0; r < ns; ++r) cw(r) = sup.weight[r] * sup.pdf[r];

    auto objective = [&](const Eigen::VectorXd& q) {
        double acc = 0.0;
        for (int r = 0; r < ns; ++r) acc += cw(r) * integrand.value(q(r));
        return acc;
    };

    const double tol = integrand.tolerance();
    const long max_iters = 100000;
    Eigen::VectorXd v = Eigen::VectorXd::Zero(nv);
    Eigen::VectorXd q = q_part;
    double fv = objective(q);
    long iter = 0;
    double gnorm = 0.0;

    for (; iter < max_iters; ++iter) {
        Eigen::VectorXd zq(ns);
        for (int r = 0; r < ns; ++r) zq(r) = cw(r) * integrand.grad(q(r));
        const Eigen::VectorXd grad_v = DZ.transpose() * zq;
        gnorm = grad_v.size() ? grad_v.cwiseAbs().maxCoeff() : 0.0;
        if (gnorm <= tol) break;

        Eigen::VectorXd dir;
        bool newton_ok = false;
        {
            Eigen::VectorXd wts(ns);
            for (int r = 0; r < ns; ++r) wts(r) = cw(r) * integrand.hess(q(r));
            const Eigen::MatrixXd Hv = DZ.transpose() * wts.asDiagonal() * DZ;
            Eigen::LDLT<Eigen::MatrixXd> ldlt(Hv);
            if (ldlt.info() == Eigen::Success) {
                dir = ldlt.solve(-grad_v);
                newton_ok = dir.allFinite() && grad_v.dot(dir) < 0.0;
            }
        }
        if (!newton_ok) dir = -grad_v;  // damped gradient fallback

        const double slope = grad_v.dot(dir);
        double step = 1.0;
        Eigen::VectorXd v_try, q_try;
        double f_try = fv;
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            v_try = v + step * dir;
            q_try = q_part + DZ * v_try;
            f_try = objective(q_try);
            if (f_try <= fv + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted)
            throw std::runtime_error(
                "solve_scaled: line search failed, reduced gradient norm " + std::to_string(gnorm));
        v = v_try;
        q = q_try;
        fv = f_try;
    }
    if (iter >= max_iters)
        throw std::runtime_error("solve_scaled: no convergence within 100000 iterations, "
                                 "reduced gradient norm " + std::to_string(gnorm));

    const Eigen::VectorXd u = u_part + Z * v;
    DiscreteFunction f = make_function(spec, u);
    if (info) {
        info->objective = fv;
        info->constraint_residual = (A * u - c).cwiseAbs().maxCoeff();
        info->iterations = iter;
        info->grad_norm = gnorm;
    }
    return f;
}

double variational_objective(const VariationalSpec& spec, const DiscreteFunction& f) {
    switch (spec.mode) {
        case VariationalMode::UnscaledReLU:
            return eval_G1(f, spec.density) + eval_G2(f) + eval_G3(f, spec.density);
        case VariationalMode::SplineG1Only:
            return eval_G1(f, spec.density);
        case VariationalMode::ScaledAbs: {
            Integrand integrand;
            if (spec.lp_p != 0.0) {
                integrand.use_lp = true;
                integrand.p = spec.lp_p;
                integrand.omega = spec.lp_omega;
            } else {
                integrand.pot = spec.pot;
            }
            const Eigen::VectorXd hpp = second_diff(f);
            const SupportNodes sup = support_nodes(f.grid, spec.density);
            double acc = 0.0;
            for (std::size_t k = 0; k < sup.idx.size(); ++k) {
                const double q = hpp(sup.idx[k] - 1) / (2.0 * sup.pdf[k]);
                acc += sup.weight[k] * sup.pdf[k] * integrand.value(q);
            }
            return acc;
        }
    }
    return 0.0;
}

std::string DiscreteFunction::to_csv() const {
    std::ostringstream os;
    os << "t,h\n";
    char buf[64];
    for (int i = 0; i < grid.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", grid.node(i));
        os << buf << ',';
        std::snprintf(buf, sizeof(buf), "%.17g", h(i));
        os << buf << '\n';
    }
    return os.str();
}

std::string solve_info_json(const DiscreteFunction& f, const SolveInfo& info) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "{\"slope_neg\":%.17g,\"slope_pos\":%.17g,\"objective\":%.17g,"
                  "\"constraint_residual\":%.17g,\"kkt_residual\":%.17g,"
                  "\"iterations\":%ld,\"grad_norm\":%.17g}",
                  f.slope_neg, f.slope_pos, info.objective, info.constraint_residual,
                  info.kkt_residual, info.iterations, info.grad_norm);
    return buf;
}

}  // namespace mflow
