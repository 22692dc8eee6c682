// mflow command line: train shallow networks by mirror descent, solve the
// matching variational problems, and cross-compare the two.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mflow/experiment.hpp"
#include "mflow/kernel.hpp"
#include "mflow/svg.hpp"

using namespace mflow;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out;
    std::string preset;
    std::string data_inline;  // "x:y,x:y,..."
    std::string pots;         // potential strings joined with ';'
    std::string pot;          // single potential
    std::string widths;       // comma list
    int width = 0;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int workers = 0;
    double eta0 = 0.0;
    long max_steps = -1;
    double threshold = 0.0;
    std::string step_mode, scope, activation, bias;
    double a_scale = -1.0, d_init = 0.0;
    bool d_init_set = false;
    long record_stride = -1;
    double grid_lo = 0.0, grid_hi = 0.0;
    int grid_n = 0;
    bool grid_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "JSON experiment config; flags override its fields");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--preset", o.preset, "dataset preset: fig1 or fig2");
    cmd->add_option("--data", o.data_inline, "inline dataset as x:y,x:y,...");
    cmd->add_option("--pots", o.pots, "potential strings joined with ';'");
    cmd->add_option("--pot", o.pot, "single potential string");
    cmd->add_option("--widths", o.widths, "comma-separated widths");
    cmd->add_option("--width", o.width, "single width");
    cmd->add_option("--seed", o.seed, "base seed (replaces the seeds list)")
        ->each([&](const std::string&) { o.seed_set = true; });
    cmd->add_option("--workers", o.workers, "concurrent sweep workers (0 = hardware)");
    cmd->add_option("--eta0", o.eta0, "step size numerator, eta = eta0/n (0 = per-potential default)");
    cmd->add_option("--max-steps", o.max_steps, "training step budget");
    cmd->add_option("--threshold", o.threshold, "stopping loss threshold");
    cmd->add_option("--step-mode", o.step_mode, "preconditioned or exact_mirror");
    cmd->add_option("--scope", o.scope, "all_params or output_only");
    cmd->add_option("--activation", o.activation, "auto, relu or abs");
    cmd->add_option("--bias", o.bias, "bias density, e.g. uniform:B=1 or truncgauss:sigma=0.5,B=1");
    cmd->add_option("--a-scale", o.a_scale, "output-weight init scale (0 = zero init)");
    cmd->add_option("--d-init", o.d_init, "output bias init")
        ->each([&](const std::string&) { o.d_init_set = true; });
    cmd->add_option("--record-stride", o.record_stride,
                    "trajectory recording stride (<= 0: geometric)");
    auto* glo = cmd->add_option("--grid-lo", o.grid_lo, "grid lower end");
    auto* ghi = cmd->add_option("--grid-hi", o.grid_hi, "grid upper end");
    auto* gn = cmd->add_option("--grid-n", o.grid_n, "grid interval count");
    glo->each([&](const std::string&) { o.grid_set = true; });
    ghi->each([&](const std::string&) { o.grid_set = true; });
    gn->each([&](const std::string&) { o.grid_set = true; });
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep))
        if (!item.empty()) out.push_back(item);
    return out;
}

ExperimentConfig build_config(const CommonOpts& o) {
    ExperimentConfig cfg;
    if (!o.config_path.empty()) cfg = ExperimentConfig::from_json_file(o.config_path);
    if (!o.preset.empty()) {
        cfg.dataset_name = o.preset;
        cfg.dataset = preset_dataset(o.preset);
    }
    if (!o.data_inline.empty()) {
        const auto pairs = split(o.data_inline, ',');
        Eigen::VectorXd xs(pairs.size()), ys(pairs.size());
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            const auto colon = pairs[i].find(':');
            if (colon == std::string::npos)
                throw std::invalid_argument("--data expects x:y pairs separated by commas");
            xs(i) = std::stod(pairs[i].substr(0, colon));
            ys(i) = std::stod(pairs[i].substr(colon + 1));
        }
        cfg.dataset_name = "inline";
        cfg.dataset = Dataset::from_1d(xs, ys);
    }
    if (!o.pots.empty()) cfg.potentials = split(o.pots, ';');
    if (!o.pot.empty()) cfg.potentials = {o.pot};
    if (!o.widths.empty()) {
        cfg.widths.clear();
        for (const auto& w : split(o.widths, ',')) cfg.widths.push_back(std::stoi(w));
    }
    if (o.width > 0) cfg.widths = {o.width};
    if (o.seed_set) cfg.seeds = {o.seed};
    if (o.workers > 0) cfg.workers = o.workers;
    if (o.eta0 > 0.0) cfg.eta0 = o.eta0;
    if (o.max_steps >= 0) cfg.max_steps = o.max_steps;
    if (o.threshold > 0.0) cfg.loss_threshold = o.threshold;
    if (!o.step_mode.empty())
        cfg.step_mode = o.step_mode == "exact_mirror" ? StepMode::ExactMirror : StepMode::Preconditioned;
    if (!o.scope.empty())
        cfg.scope = o.scope == "output_only" ? TrainScope::OutputOnly : TrainScope::AllParams;
    if (!o.activation.empty()) cfg.activation = o.activation;
    if (!o.bias.empty()) cfg.bias = BiasDensity::parse(o.bias);
    if (o.a_scale >= 0.0) cfg.a_scale = o.a_scale;
    if (o.d_init_set) cfg.d_init = o.d_init;
    if (o.record_stride >= 0) cfg.record_stride = o.record_stride;
    if (o.grid_set) {
        if (o.grid_lo != 0.0 || o.grid_hi != 0.0) {
            cfg.grid.lo = o.grid_lo;
            cfg.grid.hi = o.grid_hi;
        }
        if (o.grid_n > 0) cfg.grid.N = o.grid_n;
    }
    if (!o.out.empty()) cfg.outputs = o.out;
    cfg.validate();
    return cfg;
}

struct SingleRun {
    Potential pot;
    NetParams start;
    Trajectory traj;
    TrainConfig tc;
};

SingleRun train_single(const ExperimentConfig& cfg, std::size_t pot_index = 0) {
    SingleRun run;
    run.pot = Potential::parse(cfg.potentials.at(pot_index));
    InitSpec is;
    is.bias_density = cfg.bias;
    is.a_scale = cfg.a_scale;
    is.d_init = cfg.d_init;
    is.seed = mix_seed(cfg.seeds.front(), static_cast<std::uint64_t>(cfg.widths.front()), pot_index);
    run.start = init_params(cfg.widths.front(), 1, is, activation_for(run.pot, cfg.activation));
    run.tc.eta0 = cfg.eta0 > 0.0 ? cfg.eta0 : default_eta0(run.pot);
    run.tc.max_steps = cfg.max_steps;
    run.tc.loss_threshold = cfg.loss_threshold;
    run.tc.step_mode = cfg.step_mode;
    run.tc.scope = cfg.scope;
    run.tc.record_stride = cfg.record_stride;
    run.traj = train(run.start, cfg.dataset, run.pot, run.tc);
    return run;
}

std::string run_sidecar_json(const ExperimentConfig& cfg, const SingleRun& run) {
    std::ostringstream os;
    os << "{\n\"config\": " << cfg.echo_json() << ",\n";
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "\"cell\": {\"potential\": \"%s\", \"width\": %d, \"seed\": %llu},\n"
                  "\"status\": \"%s\", \"steps\": %ld, \"final_loss\": %.17g\n}\n",
                  run.pot.to_string().c_str(), cfg.widths.front(),
                  static_cast<unsigned long long>(cfg.seeds.front()),
                  to_string(run.traj.terminal_status).c_str(), run.traj.final_step(),
                  run.traj.final_loss());
    os << buf;
    return os.str();
}

VariationalSpec make_vspec(const ExperimentConfig& cfg, const Potential& pot,
                           const std::string& mode) {
    VariationalSpec vs;
    vs.data = cfg.dataset;
    vs.density = cfg.bias;
    vs.grid = cfg.grid;
    vs.pot = pot;
    if (mode == "unscaled") vs.mode = VariationalMode::UnscaledReLU;
    else if (mode == "scaled") vs.mode = VariationalMode::ScaledAbs;
    else if (mode == "spline") vs.mode = VariationalMode::SplineG1Only;
    else throw std::invalid_argument("--mode must be unscaled, scaled or spline");
    if (mode == "scaled" && pot.kind == Potential::Kind::PowerPlusQuad && pot.p < 2.0) {
        vs.lp_p = pot.p;  // experimental l_p objective, solver-side only
        vs.lp_omega = pot.omega;
        vs.pot = Potential::quadratic(Potential::Mode::Scaled);
    }
    return vs;
}

// Potential::parse rejects p < 2; the variational solver still accepts the
// l_p objective, so parse that one case by hand.
Potential parse_pot_lenient(const std::string& text, bool* lp, double* p_out, double* omega_out) {
    *lp = false;
    try {
        return Potential::parse(text);
    } catch (const std::exception&) {
        std::string body = text;
        if (body.rfind("scaled:", 0) == 0) body = body.substr(7);
        if (body.rfind("pow:", 0) == 0) {
            const auto pk = body.find("p=");
            const auto ok = body.find("omega=");
            if (pk != std::string::npos && ok != std::string::npos) {
                const double p = std::stod(body.substr(pk + 2));
                const double omega = std::stod(body.substr(ok + 6));
                if (p >= 1.0 && p < 2.0) {
                    *lp = true;
                    *p_out = p;
                    *omega_out = omega;
                    return Potential::quadratic(Potential::Mode::Scaled);
                }
            }
        }
        throw;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mirror-descent training and variational implicit-bias toolkit"};
    app.require_subcommand(1);

    CommonOpts o;
    std::string vmode = "unscaled";

    auto* c_train = app.add_subcommand("train", "train one network, dump trajectory CSV + sidecar");
    add_common(c_train, o);
    auto* c_var = app.add_subcommand("variational", "solve a discretized variational problem");
    add_common(c_var, o);
    c_var->add_option("--mode", vmode, "unscaled, scaled or spline");
    auto* c_cmp = app.add_subcommand("compare", "train + solve + report the L-inf gap");
    add_common(c_cmp, o);
    auto* c_diag = app.add_subcommand("diagnose", "kernel and drift diagnostics of one run");
    add_common(c_diag, o);
    auto* c_pca = app.add_subcommand("pca", "2D PCA of trajectories (shared init across potentials)");
    add_common(c_pca, o);
    auto* c_pots = app.add_subcommand("potentials", "list built-in potential families");
    auto* c_run = app.add_subcommand("run", "full sweep from a JSON config");
    add_common(c_run, o);

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_pots->parsed()) {
            std::printf("quadratic                     phi(x) = x^2\n");
            std::printf("pow:p=<real>,omega=<real>     phi(x) = |x|^p + omega x^2   (p >= 2)\n");
            std::printf("hypentropy:beta=<real>        phi(x) = x asinh(x/beta) - sqrt(x^2+beta^2)\n");
            std::printf("prefix 'scaled:'              width-scaled deployment, e.g. scaled:pow:p=3,omega=1\n");
            std::printf("\nexperiment shorthand: phi1 = quadratic, phi2 = pow:p=3,omega=1, phi3 = pow:p=4,omega=1\n");
            return 0;
        }

        ExperimentConfig cfg = build_config(o);

        if (c_run->parsed()) {
            const ComparisonReport rep = run_experiment(cfg);
            int failed = 0;
            for (const auto& c : rep.cells) failed += c.failed ? 1 : 0;
            std::printf("%zu cells, %d failed; report at %s/report.json\n", rep.cells.size(),
                        failed, cfg.outputs.c_str());
            return rep.all_ok ? 0 : 1;
        }

        if (c_train->parsed()) {
            const SingleRun run = train_single(cfg);
            write_text_file(cfg.outputs + "/trajectory.csv", trajectory_to_csv(run.traj));
            write_text_file(cfg.outputs + "/run.json", run_sidecar_json(cfg, run));
            write_text_file(cfg.outputs + "/params_final.csv",
                            params_to_csv(params_at(run.start, run.traj.final_entry())));
            std::printf("%s after %ld steps, loss %.3e -> %s/\n",
                        to_string(run.traj.terminal_status).c_str(), run.traj.final_step(),
                        run.traj.final_loss(), cfg.outputs.c_str());
            return run.traj.terminal_status == TerminalStatus::Converged ? 0 : 1;
        }

        if (c_var->parsed()) {
            bool lp = false;
            double lp_p = 0.0, lp_omega = 0.0;
            const Potential pot = parse_pot_lenient(cfg.potentials.front(), &lp, &lp_p, &lp_omega);
            VariationalSpec vs = make_vspec(cfg, pot, vmode);
            if (lp) {
                if (vmode != "scaled")
                    throw std::invalid_argument("p < 2 potentials only drive the scaled objective");
                vs.lp_p = lp_p;
                vs.lp_omega = lp_omega;
            }
            SolveInfo info;
            DiscreteFunction h;
            if (vs.mode == VariationalMode::UnscaledReLU) h = solve_unscaled(vs, &info);
            else if (vs.mode == VariationalMode::ScaledAbs) h = solve_scaled(vs, &info);
            else h = solve_spline(vs, &info);
            write_text_file(cfg.outputs + "/variational.csv", h.to_csv());
            write_text_file(cfg.outputs + "/variational.json", solve_info_json(h, info));
            std::printf("objective %.6e, constraint residual %.2e -> %s/\n", info.objective,
                        info.constraint_residual, cfg.outputs.c_str());
            return 0;
        }

        if (c_cmp->parsed()) {
            const Potential pot = Potential::parse(cfg.potentials.front());
            const SingleRun run = train_single(cfg);
            VariationalSpec vs = make_vspec(cfg, pot, pot.scaled() ? "scaled" : "unscaled");
            SolveInfo info;
            const DiscreteFunction h =
                pot.scaled() ? solve_scaled(vs, &info) : solve_unscaled(vs, &info);
            const NetParams final_net = params_at(run.start, run.traj.final_entry());
            const double err = linf_error(final_net, h);
            write_text_file(cfg.outputs + "/variational.csv", h.to_csv());
            write_text_file(cfg.outputs + "/run.json", run_sidecar_json(cfg, run));
            std::printf("linf_error %.6e (%s, n=%d, %ld steps, %s)\n", err,
                        cfg.potentials.front().c_str(), cfg.widths.front(), run.traj.final_step(),
                        to_string(run.traj.terminal_status).c_str());
            return run.traj.terminal_status == TerminalStatus::Converged ? 0 : 1;
        }

        if (c_diag->parsed()) {
            const SingleRun run = train_single(cfg);
            const KernelReport rep = drift_report(run.traj, run.start, run.pot, cfg.dataset);
            write_text_file(cfg.outputs + "/kernel_report.json", rep.to_json());
            write_text_file(cfg.outputs + "/lambda_min.csv", rep.lambda_series_csv());
            std::printf("param drift %.3e, kernel drift %.3e -> %s/\n", rep.param_drift_sup,
                        rep.kernel_drift_spectral, cfg.outputs.c_str());
            return 0;
        }

        if (c_pca->parsed()) {
            // same derived seed for every potential so all runs share the init
            std::vector<std::vector<Eigen::VectorXd>> per_pot;
            for (std::size_t pj = 0; pj < cfg.potentials.size(); ++pj) {
                ExperimentConfig one = cfg;
                one.potentials = {cfg.potentials[pj]};
                SingleRun run = train_single(one, 0);
                std::vector<Eigen::VectorXd> snaps;
                for (const auto& e : run.traj.steps) snaps.push_back(e.theta);
                per_pot.push_back(std::move(snaps));
            }
            std::vector<Eigen::VectorXd> all;
            for (const auto& v : per_pot) all.insert(all.end(), v.begin(), v.end());
            const auto scores = pca2(all);
            SvgPlot plot("parameter trajectories (2D PCA)", "pc1", "pc2");
            std::size_t off = 0;
            std::ostringstream os;
            os << "potential,index,pc1,pc2\n";
            for (std::size_t pj = 0; pj < per_pot.size(); ++pj) {
                std::vector<double> xs, ys;
                for (std::size_t i = 0; i < per_pot[pj].size(); ++i) {
                    xs.push_back(scores[off + i](0));
                    ys.push_back(scores[off + i](1));
                    os << cfg.potentials[pj] << ',' << i << ',' << scores[off + i](0) << ','
                       << scores[off + i](1) << '\n';
                }
                plot.add_line(cfg.potentials[pj], xs, ys);
                off += per_pot[pj].size();
            }
            write_text_file(cfg.outputs + "/pca.csv", os.str());
            write_text_file(cfg.outputs + "/pca.svg", plot.render());
            std::printf("PCA of %zu snapshots -> %s/\n", all.size(), cfg.outputs.c_str());
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
