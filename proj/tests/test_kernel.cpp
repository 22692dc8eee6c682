#include <doctest.h>

#include <cmath>

#include "mflow/experiment.hpp"
#include "mflow/jacobi.hpp"
#include "mflow/kernel.hpp"
#include "oracles.hpp"

using namespace mflow;

TEST_CASE("quadratic potential kernel is J J^T / 2n") {
    InitSpec spec;
    spec.seed = 3;
    spec.a_scale = 1.0;
    const NetParams net = init_params(12, 1, spec, Activation::ReLU);
    const Dataset data = preset_dataset("fig1");
    const Eigen::MatrixXd H = kernel_matrix(net, Potential::quadratic(), data);
    const Eigen::MatrixXd J = jacobian(net, data);
    const Eigen::MatrixXd expect = J * J.transpose() / (2.0 * net.width());
    CHECK((H - expect).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK((H - H.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("hand-evaluated single-unit kernel") {
    InitSpec spec;
    spec.seed = 1;
    NetParams net = init_params(1, 1, spec, Activation::ReLU);
    net.W(0, 0) = 1.0;
    net.b(0) = 0.0;
    net.a(0) = 0.0;
    net.d_out = 0.0;
    Dataset data;
    data.X.resize(1, 1);
    data.X << 2.0;
    data.y.resize(1);
    data.y << 0.0;
    const Eigen::MatrixXd H = kernel_matrix(net, Potential::quadratic(), data);
    CHECK(H.rows() == 1);
    CHECK(H(0, 0) == doctest::Approx(2.5).epsilon(1e-14));  // (sigma(2)^2 + 1) / 2
    CHECK(H(0, 0) >= 0.0);
}

TEST_CASE("kernel scales inversely with the preconditioner diagonal") {
    InitSpec spec;
    spec.seed = 5;
    spec.a_scale = 0.4;
    const NetParams net = init_params(9, 1, spec, Activation::Abs);
    const Dataset data = preset_dataset("fig2");
    // pow(2, omega) has constant phi'' = 2 + 2 omega = c * 2, so H scales by 1/c
    const Eigen::MatrixXd H1 = kernel_matrix(net, Potential::quadratic(), data);
    const Eigen::MatrixXd H3 = kernel_matrix(net, Potential::power_plus_quad(2, 2), data);
    CHECK((H1 / 3.0 - H3).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("analytic kernel closed forms at a single origin datum") {
    Dataset data;
    data.X.resize(1, 1);
    data.X << 0.0;
    data.y.resize(1);
    data.y << 0.0;
    const BiasDensity uni = BiasDensity::uniform(1.0);
    const auto [Gr, lr] = analytic_kernel(data, uni, Activation::ReLU);
    CHECK(Gr(0, 0) == doctest::Approx(1.0 / 6.0).epsilon(1e-6));
    const auto [Ga, la] = analytic_kernel(data, uni, Activation::Abs);
    CHECK(Ga(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
    CHECK(lr > 0.0);
    CHECK(la > 0.0);
}

TEST_CASE("analytic kernel rejects bad inputs") {
    Dataset empty;
    empty.X.resize(0, 1);
    empty.y.resize(0);
    CHECK_THROWS(analytic_kernel(empty, BiasDensity::uniform(1.0), Activation::ReLU));

    Eigen::VectorXd xs(2), ys(2);
    xs << 0.3, 0.3;
    ys << 0.0, 1.0;
    CHECK_THROWS(analytic_kernel(Dataset::from_1d(xs, ys), BiasDensity::uniform(1.0),
                                 Activation::ReLU));
}

TEST_CASE("lambda0 positive on both presets") {
    for (const char* preset : {"fig1", "fig2"}) {
        const Dataset data = preset_dataset(preset);
        for (Activation act : {Activation::ReLU, Activation::Abs}) {
            const auto [G, lam] = analytic_kernel(data, BiasDensity::uniform(1.0), act);
            CHECK(lam > 0.0);
        }
    }
}

TEST_CASE("min_eigenvalue spot checks and the characteristic-polynomial oracle") {
    Eigen::MatrixXd M(2, 2);
    M << 2, 1, 1, 2;
    CHECK(min_eigenvalue(M) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(min_eigenvalue(Eigen::MatrixXd::Identity(4, 4)) == doctest::Approx(1.0).epsilon(1e-12));

    Rng rng(29);
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::MatrixXd R(5, 5);
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 5; ++j) R(i, j) = rng.uniform(-1, 1);
        const Eigen::MatrixXd S = 0.5 * (R + R.transpose());
        CHECK(min_eigenvalue(S) == doctest::Approx(oracle::min_eig_charpoly(S)).epsilon(1e-9));
    }
}

TEST_CASE("min_eigenvalue rejects asymmetric input") {
    Eigen::MatrixXd M(2, 2);
    M << 1, 0.5, 0.1, 1;
    CHECK_THROWS(min_eigenvalue(M));
}

TEST_CASE("empirical kernels are PSD") {
    InitSpec spec;
    spec.a_scale = 0.8;
    const Dataset data = preset_dataset("fig1");
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        spec.seed = seed;
        const NetParams net = init_params(30, 1, spec, Activation::ReLU);
        for (const char* pname : {"quadratic", "pow:p=3,omega=1", "scaled:pow:p=4,omega=1"}) {
            const Eigen::MatrixXd H = kernel_matrix(net, Potential::parse(pname), data);
            CHECK(min_eigenvalue(H) >= -1e-10);
        }
    }
}

TEST_CASE("empirical kernel approaches G / phi''(0) at width 1000") {
    const Dataset data = preset_dataset("fig1");
    const auto [G, lam0] = analytic_kernel(data, BiasDensity::uniform(1.0), Activation::ReLU);
    InitSpec spec;
    spec.seed = 99;
    const int n = 1000;
    const NetParams net = init_params(n, 1, spec, Activation::ReLU);
    const Eigen::MatrixXd H0 = kernel_matrix(net, Potential::quadratic(), data);
    const double tol = 5.0 / std::sqrt(static_cast<double>(n));
    CHECK((H0 - G / 2.0).cwiseAbs().maxCoeff() <= tol);
    CHECK(std::fabs(min_eigenvalue(H0) - lam0 / 2.0) <= data.size() * tol);
}

TEST_CASE("drift report on a constant trajectory is zero") {
    InitSpec spec;
    spec.seed = 8;
    const NetParams net = init_params(15, 1, spec, Activation::ReLU);
    const Dataset data = preset_dataset("fig1");
    Trajectory traj;
    for (int i = 0; i < 2; ++i) {
        TrajectoryEntry e;
        e.step = i;
        e.theta = net.flatten();
        e.predictions = forward_all(net, data.X);
        e.loss_value = loss(net, data);
        traj.steps.push_back(e);
    }
    const KernelReport rep = drift_report(traj, net, Potential::quadratic(), data);
    CHECK(rep.param_drift_sup == 0.0);
    CHECK(rep.kernel_drift_spectral <= 1e-14);
    CHECK(rep.lambda_min_series.size() == 2);

    Trajectory single;
    single.steps.push_back(traj.steps.front());
    CHECK_THROWS(drift_report(single, net, Potential::quadratic(), data));
}

TEST_CASE("kernel report serializes") {
    InitSpec spec;
    spec.seed = 9;
    const NetParams net = init_params(10, 1, spec, Activation::ReLU);
    const Dataset data = preset_dataset("fig1");
    TrainConfig cfg;
    cfg.max_steps = 200;
    cfg.loss_threshold = 1e-300;
    const Trajectory traj = train(net, data, Potential::quadratic(), cfg);
    const KernelReport rep = drift_report(traj, net, Potential::quadratic(), data);
    const std::string json = rep.to_json();
    CHECK(json.find("param_drift_sup") != std::string::npos);
    CHECK(json.find("lambda_min_series") != std::string::npos);
    const std::string csv = rep.lambda_series_csv();
    CHECK(csv.rfind("step,lambda_min", 0) == 0);
}

TEST_CASE("jacobi matches Eigen-free sanity identities") {
    // eigenvalue sum equals the trace, and rotations preserve the Frobenius norm
    Rng rng(31);
    Eigen::MatrixXd R(6, 6);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) R(i, j) = rng.uniform(-2, 2);
    const Eigen::MatrixXd S = 0.5 * (R + R.transpose());
    const JacobiResult eig = jacobi_eigen(S);
    CHECK(eig.eigenvalues.sum() == doctest::Approx(S.trace()).epsilon(1e-12));
    CHECK(eig.eigenvalues.squaredNorm() == doctest::Approx(S.squaredNorm()).epsilon(1e-12));
    // eigenvectors diagonalize
    const Eigen::MatrixXd D =
        eig.eigenvectors.transpose() * S * eig.eigenvectors;
    for (int i = 0; i < 6; ++i) CHECK(D(i, i) == doctest::Approx(eig.eigenvalues(i)).epsilon(1e-10));
}
