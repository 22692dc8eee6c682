#include "mflow/kernel.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "mflow/jacobi.hpp"

namespace mflow {

Eigen::MatrixXd kernel_matrix(const NetParams& net, const Potential& pot, const Dataset& data) {
    const Eigen::MatrixXd J = jacobian(net, data);
    const Eigen::VectorXd H = hessian_diag(pot, net.flatten(), net.flatten_anchor(), net.width());
    const Eigen::MatrixXd JQ = J * H.cwiseInverse().asDiagonal();
    Eigen::MatrixXd K = JQ * J.transpose() / net.width();
    return 0.5 * (K + K.transpose());  // exact symmetry for downstream eigensolves
}

std::pair<Eigen::MatrixXd, double> analytic_kernel(const Dataset& data, const BiasDensity& density,
                                                   Activation activation, int nodes_per_sign) {
    if (data.size() == 0) throw std::invalid_argument("analytic_kernel: empty dataset");
    if (data.dim() != 1) throw std::invalid_argument("analytic_kernel: requires d = 1");
    if (nodes_per_sign < 3) throw std::invalid_argument("analytic_kernel: need at least 3 quadrature nodes");
    data.require_distinct();
    for (int i = 0; i < data.size(); ++i)
        if (std::fabs(data.X(i, 0)) > density.B + 1e-12)
            throw std::invalid_argument("analytic_kernel: |x_i| outside the bias support");

    const int m = data.size();
    const int M = nodes_per_sign;
    const double B = density.B;
    const double db = 2.0 * B / (M - 1);

    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(m, m);
    Eigen::MatrixXd vals(M, m);  // sigma(w x_i - b) on the node grid, one w at a time
    for (double w : {1.0, -1.0}) {
        for (int j = 0; j < M; ++j) {
            const double b = -B + j * db;
            for (int i = 0; i < m; ++i) vals(j, i) = activate(activation, w * data.X(i, 0) - b);
        }
        for (int i = 0; i < m; ++i) {
            for (int k = i; k < m; ++k) {
                double acc = 0.0;
                for (int j = 0; j < M; ++j) {
                    const double b = -B + j * db;
                    const double weight = (j == 0 || j == M - 1) ? 0.5 : 1.0;
                    acc += weight * vals(j, i) * vals(j, k) * density.pdf(b);
                }
                G(i, k) += 0.5 * acc * db;  // each sign carries probability 1/2
            }
        }
    }
    for (int i = 0; i < m; ++i)
        for (int k = 0; k < i; ++k) G(i, k) = G(k, i);

    return {G, min_eigenvalue(G)};
}

double min_eigenvalue(const Eigen::MatrixXd& M) {
    return jacobi_eigen(M).eigenvalues.minCoeff();
}

double spectral_norm_sym(const Eigen::MatrixXd& M) {
    return jacobi_eigen(M).eigenvalues.cwiseAbs().maxCoeff();
}

KernelReport drift_report(const Trajectory& traj, const NetParams& like, const Potential& pot,
                          const Dataset& data) {
    if (traj.steps.size() < 2) throw std::invalid_argument("drift_report: need at least 2 snapshots");

    KernelReport rep;
    NetParams net = like;
    const Eigen::VectorXd anchor = like.flatten_anchor();

    for (const auto& entry : traj.steps) {
        net.unflatten(entry.theta);
        const Eigen::MatrixXd H = kernel_matrix(net, pot, data);
        rep.lambda_min_series.emplace_back(entry.step, min_eigenvalue(H));
        rep.param_drift_sup =
            std::max(rep.param_drift_sup, (entry.theta - anchor).cwiseAbs().maxCoeff());
        if (&entry == &traj.steps.front()) rep.H0 = H;
        if (&entry == &traj.steps.back()) rep.H_final = H;
    }
    rep.kernel_drift_spectral = spectral_norm_sym(rep.H_final - rep.H0);
    return rep;
}

namespace {
std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}
}  // namespace

std::string KernelReport::to_json() const {
    std::ostringstream os;
    auto matrix = [&](const Eigen::MatrixXd& M) {
        os << '[';
        for (int i = 0; i < M.rows(); ++i) {
            os << (i ? ",[" : "[");
            for (int j = 0; j < M.cols(); ++j) os << (j ? "," : "") << fmt(M(i, j));
            os << ']';
        }
        os << ']';
    };
    os << "{\"param_drift_sup\":" << fmt(param_drift_sup)
       << ",\"kernel_drift_spectral\":" << fmt(kernel_drift_spectral) << ",\"H0\":";
    matrix(H0);
    os << ",\"H_final\":";
    matrix(H_final);
    os << ",\"lambda_min_series\":[";
    for (std::size_t i = 0; i < lambda_min_series.size(); ++i)
        os << (i ? "," : "") << "[" << lambda_min_series[i].first << ","
           << fmt(lambda_min_series[i].second) << "]";
    os << "]}";
    return os.str();
}

std::string KernelReport::lambda_series_csv() const {
    std::ostringstream os;
    os << "step,lambda_min\n";
    for (const auto& [step, lam] : lambda_min_series) os << step << ',' << fmt(lam) << '\n';
    return os.str();
}

}  // namespace mflow
