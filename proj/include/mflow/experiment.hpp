#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "mflow/kernel.hpp"
#include "mflow/network.hpp"
#include "mflow/train.hpp"
#include "mflow/variational.hpp"

namespace mflow {

/// The two reference datasets of the experiment recipes.
Dataset preset_dataset(const std::string& name);  // "fig1" or "fig2"

/// Max over grid nodes of |f(t_i, theta) - f(t_i, anchor) - h_i|: the
/// variational problem characterizes the trained-minus-initial difference.
double linf_error(const NetParams& net, const DiscreteFunction& h);

/// 2D PCA of parameter snapshots: center, form the T x T Gram matrix of the
/// centered snapshots, take its top-2 eigenpairs with the Jacobi routine and
/// map back to scores. Sign convention: first nonzero loading positive.
std::vector<Eigen::Vector2d> pca2(const std::vector<Eigen::VectorXd>& snapshots);

struct ExperimentConfig {
    std::string dataset_name = "fig1";  // "fig1", "fig2" or "inline"
    Dataset dataset;
    std::vector<int> widths = {30, 270, 2430};
    std::vector<std::string> potentials = {"quadratic", "pow:p=3,omega=1", "pow:p=4,omega=1"};
    std::string activation = "auto";  // auto: ReLU for unscaled, Abs for scaled potentials
    BiasDensity bias = BiasDensity::uniform(1.0);
    double a_scale = 0.0;
    double d_init = 0.0;
    double eta0 = 0.0;  // <= 0: per-potential default
    long max_steps = 2000000;
    double loss_threshold = 1e-7;
    StepMode step_mode = StepMode::Preconditioned;
    TrainScope scope = TrainScope::AllParams;
    long record_stride = 0;
    Grid grid = Grid::standard();
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::string outputs = "out";
    int workers = 0;  // 0: hardware concurrency

    void validate() const;
    std::string echo_json() const;

    static ExperimentConfig from_json_text(const std::string& text);
    static ExperimentConfig from_json_file(const std::string& path);
};

struct CellResult {
    int width = 0;
    std::string potential;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    std::string status;  // converged / budget_exhausted
    long steps = 0;
    double final_loss = 0.0;
    double linf = 0.0;
    double param_drift_sup = 0.0;
    double kernel_drift_spectral = 0.0;
};

struct VariationalCell {
    std::string potential;
    std::string mode;
    DiscreteFunction h;
    double objective = 0.0;
    double max_abs_hpp = 0.0;
};

struct CrossDistance {
    int width = 0;
    std::uint64_t seed = 0;
    std::string pot_a, pot_b;
    double linf = 0.0;
};

struct ComparisonReport {
    std::vector<CellResult> cells;
    std::vector<VariationalCell> variational;
    std::vector<CrossDistance> cross;
    bool all_ok = true;

    std::string to_json(const ExperimentConfig& cfg, const std::string& timestamp) const;
};

/// Trains every (width, potential, seed) cell, solves the matching
/// variational problem once per potential, compares, and writes report.json
/// plus CSV/SVG artifacts under cfg.outputs. Individual cell failures are
/// recorded and do not abort the sweep.
ComparisonReport run_experiment(const ExperimentConfig& cfg);

/// Activation a potential trains with under the "auto" rule.
Activation activation_for(const Potential& pot, const std::string& override_name);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace mflow
