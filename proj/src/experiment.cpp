#include "mflow/experiment.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "mflow/jacobi.hpp"
#include "mflow/svg.hpp"

namespace mflow {

using ordered_json = nlohmann::ordered_json;

Dataset preset_dataset(const std::string& name) {
    Eigen::VectorXd xs, ys;
    if (name == "fig1") {
        xs.resize(5);
        ys.resize(5);
        xs << -1.0, -0.2, 0.0, 0.2, 1.0;
        ys << -0.15, -0.15, 0.15, -0.15, -0.15;
    } else if (name == "fig2") {
        xs.resize(4);
        ys.resize(4);
        xs << -1.0, 0.35, 0.65, 1.0;
        ys << 0.15, 0.15, -0.15, 0.15;
    } else {
        throw std::invalid_argument("preset_dataset: unknown preset '" + name +
                                    "' (expected fig1 or fig2)");
    }
    return Dataset::from_1d(xs, ys);
}

double linf_error(const NetParams& net, const DiscreteFunction& h) {
    if (net.dim() != 1) throw std::invalid_argument("linf_error: requires d = 1");
    NetParams anchor = net;
    anchor.unflatten(net.flatten_anchor());
    double worst = 0.0;
    for (int i = 0; i < h.grid.size(); ++i) {
        const double t = h.grid.node(i);
        worst = std::max(worst, std::fabs(forward1(net, t) - forward1(anchor, t) - h.h(i)));
    }
    return worst;
}

std::vector<Eigen::Vector2d> pca2(const std::vector<Eigen::VectorXd>& snapshots) {
    const int T = static_cast<int>(snapshots.size());
    if (T < 3) throw std::invalid_argument("pca2: need at least 3 snapshots");
    const Eigen::Index p = snapshots.front().size();
    Eigen::MatrixXd X(T, p);
    for (int i = 0; i < T; ++i) {
        if (snapshots[i].size() != p) throw std::invalid_argument("pca2: snapshot size mismatch");
        X.row(i) = snapshots[i].transpose();
    }
    const Eigen::RowVectorXd mean = X.colwise().mean();
    X.rowwise() -= mean;

    const Eigen::MatrixXd gram = X * X.transpose();
    const JacobiResult eig = jacobi_eigen(gram);  // ascending

    std::vector<Eigen::Vector2d> scores(T, Eigen::Vector2d::Zero());
    for (int c = 0; c < 2; ++c) {
        const int col = T - 1 - c;
        const double lam = std::max(eig.eigenvalues(col), 0.0);
        Eigen::VectorXd v = eig.eigenvectors.col(col);
        for (int i = 0; i < T; ++i) {
            if (std::fabs(v(i)) > 1e-12) {
                if (v(i) < 0.0) v = -v;
                break;
            }
        }
        const double scale = std::sqrt(lam);
        for (int i = 0; i < T; ++i) scores[i](c) = scale * v(i);
    }
    return scores;
}

Activation activation_for(const Potential& pot, const std::string& override_name) {
    if (override_name == "relu") return Activation::ReLU;
    if (override_name == "abs") return Activation::Abs;
    if (override_name == "auto") return pot.scaled() ? Activation::Abs : Activation::ReLU;
    throw std::invalid_argument("activation: expected auto, relu or abs, got '" + override_name + "'");
}

void write_text_file(const std::string& path, const std::string& content) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << content;
    if (!os.good()) throw std::runtime_error("write failed: " + path);
}

namespace {

void check_keys(const ordered_json& obj, const std::string& ctx,
                std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) { ok = true; break; }
        if (!ok) {
            std::string keys;
            for (const char* k : allowed) keys += std::string(keys.empty() ? "" : ", ") + k;
            throw std::invalid_argument("config: unknown key '" + it.key() + "' in " + ctx +
                                        " (allowed: " + keys + ")");
        }
    }
}

std::string sanitize(const std::string& s) {
    std::string out;
    for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.') ? c : '_';
    return out;
}

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string utc_timestamp() {
    std::time_t now = std::time(nullptr);
    char buf[64];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return buf;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (widths.empty()) throw std::invalid_argument("config: widths must be non-empty");
    for (int w : widths)
        if (w < 1) throw std::invalid_argument("config: widths must be >= 1");
    if (potentials.empty()) throw std::invalid_argument("config: potentials must be non-empty");
    for (const auto& s : potentials) Potential::parse(s);
    if (seeds.empty()) throw std::invalid_argument("config: seeds must be non-empty");
    if (dataset.size() == 0) throw std::invalid_argument("config: dataset is empty");
    if (dataset.dim() != 1) throw std::invalid_argument("config: dataset must be 1-dimensional");
    dataset.require_distinct();
    grid.validate();
    if (!(loss_threshold > 0.0)) throw std::invalid_argument("config: loss_threshold must be > 0");
    if (max_steps < 0) throw std::invalid_argument("config: max_steps must be >= 0");
    if (workers < 0) throw std::invalid_argument("config: workers must be >= 0");
    if (outputs.empty()) throw std::invalid_argument("config: outputs directory must be set");
    activation_for(Potential::quadratic(), activation == "auto" ? "auto" : activation);
}

std::string ExperimentConfig::echo_json() const {
    ordered_json j;
    if (dataset_name == "inline") {
        ordered_json pts = ordered_json::array();
        for (int i = 0; i < dataset.size(); ++i)
            pts.push_back({dataset.X(i, 0), dataset.y(i)});
        j["dataset"] = pts;
    } else {
        j["dataset"] = dataset_name;
    }
    j["widths"] = widths;
    j["potentials"] = potentials;
    j["activation"] = activation;
    j["init"] = {{"bias", bias.to_string()}, {"a_scale", a_scale}, {"d_init", d_init}};
    j["train"] = {{"eta0", eta0},
                  {"max_steps", max_steps},
                  {"loss_threshold", loss_threshold},
                  {"step_mode", to_string(step_mode)},
                  {"scope", to_string(scope)},
                  {"record_stride", record_stride}};
    j["grid"] = {{"lo", grid.lo}, {"hi", grid.hi}, {"n", grid.N}};
    j["seeds"] = seeds;
    j["outputs"] = outputs;
    j["workers"] = workers;
    return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
    }
    check_keys(j, "top level",
               {"dataset", "widths", "potentials", "activation", "init", "train", "grid", "seeds",
                "outputs", "workers"});

    ExperimentConfig cfg;
    if (j.contains("dataset")) {
        if (j["dataset"].is_string()) {
            cfg.dataset_name = j["dataset"].get<std::string>();
            cfg.dataset = preset_dataset(cfg.dataset_name);
        } else if (j["dataset"].is_array()) {
            cfg.dataset_name = "inline";
            const auto& arr = j["dataset"];
            Eigen::VectorXd xs(arr.size()), ys(arr.size());
            for (std::size_t i = 0; i < arr.size(); ++i) {
                if (!arr[i].is_array() || arr[i].size() != 2)
                    throw std::invalid_argument("config: inline dataset entries must be [x, y] pairs");
                xs(i) = arr[i][0].get<double>();
                ys(i) = arr[i][1].get<double>();
            }
            cfg.dataset = Dataset::from_1d(xs, ys);
        } else {
            throw std::invalid_argument("config: dataset must be a preset name or [x, y] pairs");
        }
    } else {
        cfg.dataset = preset_dataset(cfg.dataset_name);
    }
    if (j.contains("widths")) cfg.widths = j["widths"].get<std::vector<int>>();
    if (j.contains("potentials")) cfg.potentials = j["potentials"].get<std::vector<std::string>>();
    if (j.contains("activation")) cfg.activation = j["activation"].get<std::string>();
    if (j.contains("init")) {
        const auto& init = j["init"];
        check_keys(init, "init", {"bias", "a_scale", "d_init"});
        if (init.contains("bias")) cfg.bias = BiasDensity::parse(init["bias"].get<std::string>());
        if (init.contains("a_scale")) cfg.a_scale = init["a_scale"].get<double>();
        if (init.contains("d_init")) cfg.d_init = init["d_init"].get<double>();
    }
    if (j.contains("train")) {
        const auto& tr = j["train"];
        check_keys(tr, "train",
                   {"eta0", "max_steps", "loss_threshold", "step_mode", "scope", "record_stride"});
        if (tr.contains("eta0")) cfg.eta0 = tr["eta0"].get<double>();
        if (tr.contains("max_steps")) cfg.max_steps = tr["max_steps"].get<long>();
        if (tr.contains("loss_threshold")) cfg.loss_threshold = tr["loss_threshold"].get<double>();
        if (tr.contains("step_mode")) {
            const std::string m = tr["step_mode"].get<std::string>();
            if (m == "preconditioned") cfg.step_mode = StepMode::Preconditioned;
            else if (m == "exact_mirror") cfg.step_mode = StepMode::ExactMirror;
            else throw std::invalid_argument("config: step_mode must be preconditioned or exact_mirror");
        }
        if (tr.contains("scope")) {
            const std::string s = tr["scope"].get<std::string>();
            if (s == "all_params") cfg.scope = TrainScope::AllParams;
            else if (s == "output_only") cfg.scope = TrainScope::OutputOnly;
            else throw std::invalid_argument("config: scope must be all_params or output_only");
        }
        if (tr.contains("record_stride")) cfg.record_stride = tr["record_stride"].get<long>();
    }
    if (j.contains("grid")) {
        const auto& g = j["grid"];
        check_keys(g, "grid", {"lo", "hi", "n"});
        if (g.contains("lo")) cfg.grid.lo = g["lo"].get<double>();
        if (g.contains("hi")) cfg.grid.hi = g["hi"].get<double>();
        if (g.contains("n")) cfg.grid.N = g["n"].get<int>();
    }
    if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("outputs")) cfg.outputs = j["outputs"].get<std::string>();
    if (j.contains("workers")) cfg.workers = j["workers"].get<int>();
    cfg.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return from_json_text(ss.str());
}

std::string ComparisonReport::to_json(const ExperimentConfig& cfg, const std::string& timestamp) const {
    ordered_json j;
    j["config"] = ordered_json::parse(cfg.echo_json());
    j["generated_at"] = timestamp;
    j["all_ok"] = all_ok;
    ordered_json vars = ordered_json::array();
    for (const auto& v : variational)
        vars.push_back({{"potential", v.potential},
                        {"mode", v.mode},
                        {"objective", v.objective},
                        {"max_abs_hpp", v.max_abs_hpp}});
    j["variational"] = vars;
    ordered_json cells_j = ordered_json::array();
    for (const auto& c : cells) {
        ordered_json cj = {{"width", c.width},     {"potential", c.potential},
                           {"seed", c.seed},       {"status", c.failed ? "failed" : c.status},
                           {"steps", c.steps},     {"final_loss", c.final_loss},
                           {"linf_error", c.linf}, {"param_drift_sup", c.param_drift_sup},
                           {"kernel_drift_spectral", c.kernel_drift_spectral}};
        if (c.failed) cj["error"] = c.error;
        cells_j.push_back(cj);
    }
    j["cells"] = cells_j;
    ordered_json cross_j = ordered_json::array();
    for (const auto& x : cross)
        cross_j.push_back({{"width", x.width},
                           {"seed", x.seed},
                           {"pot_a", x.pot_a},
                           {"pot_b", x.pot_b},
                           {"linf", x.linf}});
    j["cross_potential_linf"] = cross_j;
    return j.dump(2) + "\n";
}

namespace {

struct CellData {
    CellResult res;
    Eigen::VectorXd final_fn;  // f(t) - f(t, anchor) on the grid
    std::vector<Eigen::VectorXd> snapshots;  // kept only for the PCA cell
    std::string lambda_csv;
    bool keep_traj = false;
};

}  // namespace

ComparisonReport run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    std::filesystem::create_directories(cfg.outputs);

    std::vector<Potential> pots;
    for (const auto& s : cfg.potentials) pots.push_back(Potential::parse(s));

    ComparisonReport report;

    // one variational solve per potential
    std::vector<DiscreteFunction> solutions;
    for (std::size_t pj = 0; pj < pots.size(); ++pj) {
        VariationalSpec vs;
        vs.data = cfg.dataset;
        vs.density = cfg.bias;
        vs.grid = cfg.grid;
        vs.mode = pots[pj].scaled() ? VariationalMode::ScaledAbs : VariationalMode::UnscaledReLU;
        vs.pot = pots[pj];
        SolveInfo info;
        DiscreteFunction h = pots[pj].scaled() ? solve_scaled(vs, &info) : solve_unscaled(vs, &info);
        VariationalCell vc;
        vc.potential = cfg.potentials[pj];
        vc.mode = pots[pj].scaled() ? "scaled_abs" : "unscaled_relu";
        vc.objective = info.objective;
        vc.max_abs_hpp = second_diff(h).cwiseAbs().maxCoeff();
        report.variational.push_back(vc);
        solutions.push_back(std::move(h));
        write_text_file(cfg.outputs + "/variational_" + sanitize(cfg.potentials[pj]) + ".csv",
                        solutions.back().to_csv());
    }

    // sweep cells
    const int max_width = *std::max_element(cfg.widths.begin(), cfg.widths.end());
    std::vector<CellData> cells;
    for (int w : cfg.widths)
        for (std::size_t pj = 0; pj < pots.size(); ++pj)
            for (std::uint64_t seed : cfg.seeds) {
                CellData cd;
                cd.res.width = w;
                cd.res.potential = cfg.potentials[pj];
                cd.res.seed = seed;
                cd.keep_traj = (w == max_width && seed == cfg.seeds.front());
                cells.push_back(std::move(cd));
            }

    auto run_cell = [&](CellData& cd) {
        const std::size_t pj = static_cast<std::size_t>(
            std::find(cfg.potentials.begin(), cfg.potentials.end(), cd.res.potential) -
            cfg.potentials.begin());
        const Potential& pot = pots[pj];
        try {
            InitSpec is;
            is.bias_density = cfg.bias;
            is.a_scale = cfg.a_scale;
            is.d_init = cfg.d_init;
            is.seed = mix_seed(cd.res.seed, static_cast<std::uint64_t>(cd.res.width), pj);
            const NetParams start =
                init_params(cd.res.width, 1, is, activation_for(pot, cfg.activation));

            TrainConfig tc;
            tc.eta0 = cfg.eta0 > 0.0 ? cfg.eta0 : default_eta0(pot);
            tc.max_steps = cfg.max_steps;
            tc.loss_threshold = cfg.loss_threshold;
            tc.step_mode = cfg.step_mode;
            tc.scope = cfg.scope;
            tc.record_stride = cfg.record_stride;
            const Trajectory traj = train(start, cfg.dataset, pot, tc);

            cd.res.status = to_string(traj.terminal_status);
            cd.res.steps = traj.final_step();
            cd.res.final_loss = traj.final_loss();

            const KernelReport kr = drift_report(traj, start, pot, cfg.dataset);
            cd.res.param_drift_sup = kr.param_drift_sup;
            cd.res.kernel_drift_spectral = kr.kernel_drift_spectral;
            if (cd.keep_traj) {
                cd.lambda_csv = kr.lambda_series_csv();
                for (const auto& e : traj.steps) cd.snapshots.push_back(e.theta);
            }

            const NetParams final_net = params_at(start, traj.final_entry());
            NetParams anchor_net = start;
            anchor_net.unflatten(start.flatten_anchor());
            cd.final_fn.resize(cfg.grid.size());
            for (int i = 0; i < cfg.grid.size(); ++i) {
                const double t = cfg.grid.node(i);
                cd.final_fn(i) = forward1(final_net, t) - forward1(anchor_net, t);
            }
            cd.res.linf = (cd.final_fn - solutions[pj].h).cwiseAbs().maxCoeff();
        } catch (const std::exception& e) {
            cd.res.failed = true;
            cd.res.error = e.what();
        }
    };

    const int nworkers =
        cfg.workers > 0 ? cfg.workers
                        : std::max(1u, std::thread::hardware_concurrency());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            run_cell(cells[i]);
        }
    };
    std::vector<std::thread> threads;
    for (int t = 1; t < nworkers; ++t) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();

    for (auto& cd : cells) {
        report.cells.push_back(cd.res);
        report.all_ok = report.all_ok && !cd.res.failed;
    }

    // cross-potential pairwise distances of the final functions
    auto cell_at = [&](int w, std::size_t pj, std::uint64_t seed) -> const CellData& {
        for (const auto& cd : cells)
            if (cd.res.width == w && cd.res.seed == seed && cd.res.potential == cfg.potentials[pj])
                return cd;
        throw std::logic_error("cell lookup failed");
    };
    for (int w : cfg.widths)
        for (std::uint64_t seed : cfg.seeds)
            for (std::size_t a = 0; a < pots.size(); ++a)
                for (std::size_t b = a + 1; b < pots.size(); ++b) {
                    const CellData& ca = cell_at(w, a, seed);
                    const CellData& cb = cell_at(w, b, seed);
                    if (ca.res.failed || cb.res.failed) continue;
                    CrossDistance x;
                    x.width = w;
                    x.seed = seed;
                    x.pot_a = cfg.potentials[a];
                    x.pot_b = cfg.potentials[b];
                    x.linf = (ca.final_fn - cb.final_fn).cwiseAbs().maxCoeff();
                    report.cross.push_back(x);
                }

    // ---- artifacts ----
    const std::string stamp = utc_timestamp();
    write_text_file(cfg.outputs + "/report.json", report.to_json(cfg, stamp));

    {
        std::ostringstream os;
        os << "potential,width,seed,status,steps,final_loss,linf_error\n";
        for (const auto& c : report.cells)
            os << c.potential << ',' << c.width << ',' << c.seed << ','
               << (c.failed ? "failed" : c.status) << ',' << c.steps << ',' << fmt17(c.final_loss)
               << ',' << fmt17(c.linf) << '\n';
        write_text_file(cfg.outputs + "/errors.csv", os.str());
    }
    {
        std::ostringstream os;
        os << "potential,width,seed,param_drift_sup,kernel_drift_spectral\n";
        for (const auto& c : report.cells)
            os << c.potential << ',' << c.width << ',' << c.seed << ',' << fmt17(c.param_drift_sup)
               << ',' << fmt17(c.kernel_drift_spectral) << '\n';
        write_text_file(cfg.outputs + "/drift.csv", os.str());
    }
    {
        std::ostringstream os;
        os << "width,seed,pot_a,pot_b,linf\n";
        for (const auto& x : report.cross)
            os << x.width << ',' << x.seed << ',' << x.pot_a << ',' << x.pot_b << ','
               << fmt17(x.linf) << '\n';
        write_text_file(cfg.outputs + "/cross_potential.csv", os.str());
    }

    // per-potential overlays, recorded kernel series and PCA of the kept cell
    std::vector<double> grid_ts(cfg.grid.size());
    for (int i = 0; i < cfg.grid.size(); ++i) grid_ts[i] = cfg.grid.node(i);
    SvgPlot pca_plot("parameter trajectories (2D PCA)", "pc1", "pc2");
    bool any_pca = false;
    for (std::size_t pj = 0; pj < pots.size(); ++pj) {
        const std::string tag = sanitize(cfg.potentials[pj]);
        const CellData* kept = nullptr;
        for (const auto& cd : cells)
            if (cd.keep_traj && cd.res.potential == cfg.potentials[pj] && !cd.res.failed) kept = &cd;
        if (!kept) continue;

        {
            std::ostringstream os;
            os << "t,h_variational,f_net\n";
            for (int i = 0; i < cfg.grid.size(); ++i)
                os << fmt17(grid_ts[i]) << ',' << fmt17(solutions[pj].h(i)) << ','
                   << fmt17(kept->final_fn(i)) << '\n';
            write_text_file(cfg.outputs + "/function_" + tag + ".csv", os.str());
        }
        write_text_file(cfg.outputs + "/lambda_min_" + tag + ".csv", kept->lambda_csv);

        SvgPlot overlay("trained network vs variational solution (" + cfg.potentials[pj] + ")",
                        "x", "f(x) - f0(x)");
        overlay.add_line("variational",
                         grid_ts, std::vector<double>(solutions[pj].h.data(),
                                                      solutions[pj].h.data() + cfg.grid.size()));
        overlay.add_line("net n=" + std::to_string(max_width), grid_ts,
                         std::vector<double>(kept->final_fn.data(),
                                             kept->final_fn.data() + cfg.grid.size()));
        write_text_file(cfg.outputs + "/overlay_" + tag + ".svg", overlay.render());

        if (kept->snapshots.size() >= 3) {
            const auto scores = pca2(kept->snapshots);
            std::ostringstream os;
            os << "index,pc1,pc2\n";
            std::vector<double> xs, ys;
            for (std::size_t i = 0; i < scores.size(); ++i) {
                os << i << ',' << fmt17(scores[i](0)) << ',' << fmt17(scores[i](1)) << '\n';
                xs.push_back(scores[i](0));
                ys.push_back(scores[i](1));
            }
            write_text_file(cfg.outputs + "/pca_" + tag + ".csv", os.str());
            pca_plot.add_scatter(cfg.potentials[pj], xs, ys);
            any_pca = true;
        }
    }
    if (any_pca) write_text_file(cfg.outputs + "/pca.svg", pca_plot.render());

    // error and drift against width (log-log), per potential, seed-averaged
    SvgPlot err_plot("L-inf error vs width", "width", "L-inf error", true, true);
    SvgPlot drift_plot("parameter drift vs width", "width", "sup ||theta - anchor||_inf", true, true);
    for (std::size_t pj = 0; pj < pots.size(); ++pj) {
        std::vector<double> ws, errs, drifts;
        for (int w : cfg.widths) {
            double esum = 0.0, dsum = 0.0;
            int count = 0;
            for (const auto& c : report.cells)
                if (!c.failed && c.width == w && c.potential == cfg.potentials[pj]) {
                    esum += c.linf;
                    dsum += c.param_drift_sup;
                    ++count;
                }
            if (count == 0) continue;
            ws.push_back(w);
            errs.push_back(esum / count);
            drifts.push_back(dsum / count);
        }
        err_plot.add_line(cfg.potentials[pj], ws, errs);
        drift_plot.add_line(cfg.potentials[pj], ws, drifts);
    }
    write_text_file(cfg.outputs + "/error_vs_width.svg", err_plot.render());
    write_text_file(cfg.outputs + "/drift_vs_width.svg", drift_plot.render());

    return report;
}

}  // namespace mflow
