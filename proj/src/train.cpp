#include "mflow/train.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace mflow {

double default_eta0(const Potential& pot) {
    if (pot.scaled() && pot.kind == Potential::Kind::PowerPlusQuad && pot.p >= 4.0) return 2.0;
    return 1.0;
}

NetParams md_step(const NetParams& params, const Potential& pot,
                  const Eigen::VectorXd& grad, double eta, StepMode mode) {
    const Eigen::VectorXd theta = params.flatten();
    const Eigen::VectorXd anchor = params.flatten_anchor();
    if (grad.size() != theta.size()) throw std::invalid_argument("md_step: gradient size mismatch");

    Eigen::VectorXd next(theta.size());
    const int n = params.width();
    if (mode == StepMode::Preconditioned) {
        const Eigen::VectorXd H = hessian_diag(pot, theta, anchor, n);
        if (!(H.minCoeff() > 0.0)) throw std::runtime_error("md_step: non-positive Hessian diagonal");
        next = theta.array() - (eta / H.array()) * grad.array();
    } else {
        const double s = pot.scaled() ? static_cast<double>(n) : 1.0;
        for (int k = 0; k < theta.size(); ++k) {
            const double rhs = phi_grad(pot, s * (theta(k) - anchor(k))) - s * eta * grad(k);
            next(k) = anchor(k) + inverse_grad(pot, rhs) / s;
        }
    }
    NetParams out = params;
    out.unflatten(next);
    return out;
}

namespace {

bool should_record(long step, long stride) {
    if (stride > 0) return step % stride == 0;
    return step == 0 || (step & (step - 1)) == 0;  // powers of two
}

// Shared training loop. The updater is invoked with the residual-backed
// block gradients; keeping loss evaluation, recording and termination in one
// place is what makes the quadratic-mirror == GD comparison exact.
template <typename Updater>
Trajectory run_loop(const NetParams& start, const Dataset& data, const TrainConfig& cfg,
                    bool output_only, Updater&& update) {
    if (!(cfg.eta0 > 0.0)) throw std::invalid_argument("train: eta0 must be > 0");
    if (!(cfg.loss_threshold > 0.0)) throw std::invalid_argument("train: loss_threshold must be > 0");
    data.require_distinct();

    NetParams net = start;  // private copy
    const int n = net.width(), d = net.dim(), m = data.size();
    const Eigen::MatrixXd Xt = data.X.transpose();  // d x m

    Eigen::MatrixXd pre(n, m), S(n, m), Sp(n, m);
    Eigen::VectorXd f(m), r(m);
    Eigen::VectorXd ga(n), gb(n), gd_v(1);
    Eigen::MatrixXd gW(n, d);

    const bool relu = net.activation == Activation::ReLU;
    auto recompute_features = [&]() {
        pre.noalias() = net.W * Xt;
        pre.colwise() -= net.b;
        if (relu) {
            S = pre.cwiseMax(0.0);
            Sp = (pre.array() > 0.0).cast<double>();
        } else {
            S = pre.cwiseAbs();
            Sp = (pre.array() > 0.0).cast<double>() - (pre.array() < 0.0).cast<double>();
        }
    };
    recompute_features();  // frozen features are enough for OutputOnly

    Trajectory traj;
    auto record = [&](long step, double loss_value) {
        TrajectoryEntry e;
        e.step = step;
        e.loss_value = loss_value;
        e.theta = net.flatten();
        e.predictions = f;
        traj.steps.push_back(std::move(e));
    };

    const double inv_m = 1.0 / static_cast<double>(m);
    for (long step = 0;; ++step) {
        if (!output_only && step > 0) recompute_features();
        f.noalias() = S.transpose() * net.a;
        f.array() += net.d_out;
        r = f - data.y;
        const double loss_value = r.squaredNorm() * 0.5 * inv_m;
        if (!std::isfinite(loss_value))
            throw std::runtime_error("train: non-finite loss at step " + std::to_string(step));

        if (loss_value <= cfg.loss_threshold) {
            record(step, loss_value);
            traj.terminal_status = TerminalStatus::Converged;
            return traj;
        }
        if (step >= cfg.max_steps) {
            record(step, loss_value);
            traj.terminal_status = TerminalStatus::BudgetExhausted;
            return traj;
        }
        if (should_record(step, cfg.record_stride)) record(step, loss_value);

        ga.noalias() = S * r;
        ga *= inv_m;
        if (!output_only) {
            gb.noalias() = Sp * r;
            gb = -inv_m * net.a.cwiseProduct(gb);
            gW.noalias() = Sp * (r.asDiagonal() * data.X);
            gW.array().colwise() *= inv_m * net.a.array();
            const double gd = r.sum() * inv_m;
            update(net, gW, gb, ga, gd);
        } else {
            Eigen::MatrixXd zW;
            Eigen::VectorXd zb;
            update(net, zW, zb, ga, 0.0);
        }
    }
}

// Elementwise phi'' without the per-call dispatch of phi_hess.
struct HessEval {
    Potential::Kind kind;
    double c, w2, pm2, beta2;
    explicit HessEval(const Potential& pot)
        : kind(pot.kind),
          c(pot.p * (pot.p - 1.0)),
          w2(2.0 * pot.omega),
          pm2(pot.p - 2.0),
          beta2(pot.beta * pot.beta) {}
    double operator()(double z) const {
        switch (kind) {
            case Potential::Kind::Quadratic: return 2.0;
            case Potential::Kind::PowerPlusQuad: {
                const double az = std::fabs(z);
                if (pm2 == 0.0) return c + w2;
                if (pm2 == 1.0) return c * az + w2;
                if (pm2 == 2.0) return c * az * az + w2;
                return c * std::pow(az, pm2) + w2;
            }
            case Potential::Kind::Hypentropy: return 1.0 / std::sqrt(z * z + beta2);
        }
        return 2.0;
    }
};

}  // namespace

Trajectory train(const NetParams& start, const Dataset& data, const Potential& pot,
                 const TrainConfig& cfg) {
    const int n = start.width();
    const double eta = cfg.eta0 / static_cast<double>(n);
    const bool output_only = cfg.scope == TrainScope::OutputOnly;
    const double s = pot.scaled() ? static_cast<double>(n) : 1.0;

    if (cfg.step_mode == StepMode::Preconditioned) {
        const HessEval hess(pot);
        auto precond = [&](Eigen::VectorXd& block, const Eigen::VectorXd& block0,
                           const Eigen::VectorXd& g) {
            for (int k = 0; k < block.size(); ++k)
                block(k) -= (eta / hess(s * (block(k) - block0(k)))) * g(k);
        };
        return run_loop(start, data, cfg, output_only,
                        [&](NetParams& net, const Eigen::MatrixXd& gW, const Eigen::VectorXd& gb,
                            const Eigen::VectorXd& ga, double gd) {
                            if (gW.size() > 0) {
                                for (int col = 0; col < net.W.cols(); ++col) {
                                    for (int k = 0; k < net.W.rows(); ++k)
                                        net.W(k, col) -=
                                            (eta / hess(s * (net.W(k, col) - net.W0(k, col)))) * gW(k, col);
                                }
                                precond(net.b, net.b0, gb);
                                net.d_out -= (eta / hess(s * (net.d_out - net.d_out0))) * gd;
                            }
                            precond(net.a, net.a0, ga);
                        });
    }

    // ExactMirror: one scalar mirror-map inversion per stepped coordinate.
    auto exact = [&](double& v, double v0, double g) {
        const double rhs = phi_grad(pot, s * (v - v0)) - s * eta * g;
        v = v0 + inverse_grad(pot, rhs) / s;
    };
    return run_loop(start, data, cfg, output_only,
                    [&](NetParams& net, const Eigen::MatrixXd& gW, const Eigen::VectorXd& gb,
                        const Eigen::VectorXd& ga, double gd) {
                        if (gW.size() > 0) {
                            for (int col = 0; col < net.W.cols(); ++col)
                                for (int k = 0; k < net.W.rows(); ++k)
                                    exact(net.W(k, col), net.W0(k, col), gW(k, col));
                            for (int k = 0; k < net.b.size(); ++k) exact(net.b(k), net.b0(k), gb(k));
                            exact(net.d_out, net.d_out0, gd);
                        }
                        for (int k = 0; k < net.a.size(); ++k) exact(net.a(k), net.a0(k), ga(k));
                    });
}

Trajectory train_gd_reference(const NetParams& start, const Dataset& data, double rate,
                              const TrainConfig& cfg) {
    return run_loop(start, data, cfg, cfg.scope == TrainScope::OutputOnly,
                    [&](NetParams& net, const Eigen::MatrixXd& gW, const Eigen::VectorXd& gb,
                        const Eigen::VectorXd& ga, double gd) {
                        if (gW.size() > 0) {
                            for (int col = 0; col < net.W.cols(); ++col)
                                for (int k = 0; k < net.W.rows(); ++k) net.W(k, col) -= rate * gW(k, col);
                            for (int k = 0; k < net.b.size(); ++k) net.b(k) -= rate * gb(k);
                            net.d_out -= rate * gd;
                        }
                        for (int k = 0; k < net.a.size(); ++k) net.a(k) -= rate * ga(k);
                    });
}

NetParams params_at(const NetParams& like, const TrajectoryEntry& entry) {
    NetParams out = like;
    out.unflatten(entry.theta);
    return out;
}

std::string trajectory_to_csv(const Trajectory& traj) {
    std::ostringstream os;
    os << "step,loss";
    const auto p = traj.steps.empty() ? 0 : traj.steps.front().theta.size();
    for (Eigen::Index k = 0; k < p; ++k) os << ",theta_" << k;
    os << '\n';
    char buf[64];
    for (const auto& e : traj.steps) {
        std::snprintf(buf, sizeof(buf), "%.17g", e.loss_value);
        os << e.step << ',' << buf;
        for (Eigen::Index k = 0; k < e.theta.size(); ++k) {
            std::snprintf(buf, sizeof(buf), "%.17g", e.theta(k));
            os << ',' << buf;
        }
        os << '\n';
    }
    return os.str();
}

std::string to_string(StepMode mode) {
    return mode == StepMode::Preconditioned ? "preconditioned" : "exact_mirror";
}
std::string to_string(TrainScope scope) {
    return scope == TrainScope::AllParams ? "all_params" : "output_only";
}
std::string to_string(TerminalStatus status) {
    return status == TerminalStatus::Converged ? "converged" : "budget_exhausted";
}

}  // namespace mflow
