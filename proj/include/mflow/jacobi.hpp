#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace mflow {

struct JacobiResult {
    Eigen::VectorXd eigenvalues;   // ascending
    Eigen::MatrixXd eigenvectors;  // columns, same order
};

/// Cyclic Jacobi rotations for dense symmetric matrices. Sweeps run until the
/// off-diagonal Frobenius norm drops below 1e-12 (or machine level relative
/// to the matrix scale, whichever is reached first). The matrices this
/// project diagonalizes are small (m <= 16 kernels, snapshot Gram matrices),
/// so O(m^3) per sweep is immaterial.
inline JacobiResult jacobi_eigen(const Eigen::MatrixXd& M, double asym_tol = 1e-10) {
    if (M.rows() != M.cols()) throw std::invalid_argument("jacobi_eigen: matrix not square");
    const double asym = (M - M.transpose()).cwiseAbs().maxCoeff();
    if (asym > asym_tol)
        throw std::invalid_argument("jacobi_eigen: asymmetry " + std::to_string(asym) +
                                    " exceeds tolerance");

    const int n = static_cast<int>(M.rows());
    Eigen::MatrixXd A = 0.5 * (M + M.transpose());
    Eigen::MatrixXd V = Eigen::MatrixXd::Identity(n, n);

    auto off_norm = [&]() {
        double s = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) s += 2.0 * A(i, j) * A(i, j);
        return std::sqrt(s);
    };

    const double scale = std::max(1.0, A.norm());
    const double tol = std::max(1e-12, 1e-15 * scale);
    for (int sweep = 0; sweep < 100 && off_norm() > tol; ++sweep) {
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = A(p, q);
                if (std::fabs(apq) <= 1e-300) continue;
                const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                const double tau = s / (1.0 + c);

                const double app = A(p, p), aqq = A(q, q);
                A(p, p) = app - t * apq;
                A(q, q) = aqq + t * apq;
                A(p, q) = A(q, p) = 0.0;
                for (int r = 0; r < n; ++r) {
                    if (r != p && r != q) {
                        const double arp = A(r, p), arq = A(r, q);
                        A(r, p) = A(p, r) = arp - s * (arq + tau * arp);
                        A(r, q) = A(q, r) = arq + s * (arp - tau * arq);
                    }
                    const double vrp = V(r, p), vrq = V(r, q);
                    V(r, p) = vrp - s * (vrq + tau * vrp);
                    V(r, q) = vrq + s * (vrp - tau * vrq);
                }
            }
        }
    }

    // sort ascending
    JacobiResult res;
    res.eigenvalues.resize(n);
    res.eigenvectors.resize(n, n);
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int i, int j) { return A(i, i) < A(j, j); });
    for (int i = 0; i < n; ++i) {
        res.eigenvalues(i) = A(order[i], order[i]);
        res.eigenvectors.col(i) = V.col(order[i]);
    }
    return res;
}

}  // namespace mflow
