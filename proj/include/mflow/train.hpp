#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "mflow/network.hpp"
#include "mflow/potential.hpp"

namespace mflow {

enum class StepMode { Preconditioned, ExactMirror };
enum class TrainScope { AllParams, OutputOnly };
enum class TerminalStatus { Converged, BudgetExhausted };

struct TrainConfig {
    double eta0 = 1.0;             // step size is eta = eta0 / n
    long max_steps = 2000000;
    double loss_threshold = 1e-7;
    StepMode step_mode = StepMode::Preconditioned;
    TrainScope scope = TrainScope::AllParams;
    long record_stride = 0;        // <= 0: geometric recording (0, 1, 2, 4, 8, ...)
};

/// Reference learning rate from the experiment recipes: eta0 = 2 for scaled
/// power potentials with p >= 4, eta0 = 1 otherwise.
double default_eta0(const Potential& pot);

struct TrajectoryEntry {
    long step = 0;
    double loss_value = 0.0;
    Eigen::VectorXd theta;        // flattened (W, b, a, d)
    Eigen::VectorXd predictions;  // f(x_i) at this step
};

struct Trajectory {
    std::vector<TrajectoryEntry> steps;
    TerminalStatus terminal_status = TerminalStatus::BudgetExhausted;

    const TrajectoryEntry& final_entry() const { return steps.back(); }
    double final_loss() const { return steps.back().loss_value; }
    long final_step() const { return steps.back().step; }
};

/// One mirror-descent step on all parameters.
///
/// Preconditioned: theta_k -= eta * grad_k / H_kk with H = hessian_diag,
/// i.e. explicit Euler on the mirror flow (the experimental scheme).
/// ExactMirror: solves phi'(s(theta'_k - anchor_k)) =
/// phi'(s(theta_k - anchor_k)) - c eta grad_k per coordinate, with
/// (s, c) = (1, 1) unscaled and (n, n) scaled.
NetParams md_step(const NetParams& params, const Potential& pot,
                  const Eigen::VectorXd& grad, double eta, StepMode mode);

/// Full-batch mirror descent at eta = eta0 / n until the loss drops below
/// cfg.loss_threshold or the step budget runs out. scope = OutputOnly keeps
/// W, b and the output bias frozen at their initial values. A non-finite
/// loss raises an error naming the step.
Trajectory train(const NetParams& start, const Dataset& data, const Potential& pot,
                 const TrainConfig& cfg);

/// Plain gradient descent theta -= rate * grad on the same loop (same loss
/// evaluation and recording schedule). With a quadratic potential,
/// train(...) at eta matches this reference at rate eta/2 bit for bit.
Trajectory train_gd_reference(const NetParams& start, const Dataset& data, double rate,
                              const TrainConfig& cfg);

/// Writes a network with the trajectory's final parameters.
NetParams params_at(const NetParams& like, const TrajectoryEntry& entry);

/// CSV: header then one row per recorded step: step,loss,theta_0,...,theta_{p-1}.
std::string trajectory_to_csv(const Trajectory& traj);

std::string to_string(StepMode mode);
std::string to_string(TrainScope scope);
std::string to_string(TerminalStatus status);

}  // namespace mflow
