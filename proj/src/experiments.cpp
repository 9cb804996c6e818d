#include "crowdtrade/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <memory>
#include <tuple>
#include <sstream>
#include <system_error>

#include "crowdtrade/closed_form.hpp"
#include "crowdtrade/core_model.hpp"
#include "crowdtrade/errors.hpp"
#include "crowdtrade/hetero_equilibrium.hpp"
#include "crowdtrade/learning_dynamics.hpp"
#include "crowdtrade/parallel.hpp"
#include "crowdtrade/pde_solver.hpp"
#include "crowdtrade/population_simulator.hpp"
#include "crowdtrade/scenario.hpp"

namespace crowdtrade {

using nlohmann::json;

std::string format_double(double value) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw std::runtime_error("short write to '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

CsvWriter::CsvWriter(const std::vector<std::string>& header) : columns_(header.size()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) text_ += ',';
        text_ += header[i];
    }
    text_ += '\n';
}

void CsvWriter::separator() {
    if (in_row_ == columns_) throw std::logic_error("CSV row has too many cells");
    if (in_row_++) text_ += ',';
}

CsvWriter& CsvWriter::cell(double value) {
    separator();
    text_ += format_double(value);
    return *this;
}

CsvWriter& CsvWriter::cell(std::optional<double> value) {
    separator();
    if (value) text_ += format_double(*value);
    return *this;
}

CsvWriter& CsvWriter::cell(std::size_t value) {
    separator();
    text_ += std::to_string(value);
    return *this;
}

CsvWriter& CsvWriter::cell(std::string_view text) {
    separator();
    text_ += text;
    return *this;
}

void CsvWriter::end_row() {
    if (in_row_ != columns_) throw std::logic_error("CSV row has too few cells");
    text_ += '\n';
    in_row_ = 0;
}

std::vector<double> SweepRange::values() const {
    if (count == 0) throw ScenarioError("sweep range needs at least one point");
    if (count == 1) return {lo};
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i)
        out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
    return out;
}

namespace {

template <class T>
void put(json& j, const char* key, const std::optional<T>& value) {
    j[key] = value ? json(*value) : json(nullptr);
}

template <class T>
void get(const json& j, const char* key, std::optional<T>& value) {
    if (j.contains(key) && !j.at(key).is_null()) value = j.at(key).get<T>();
}

json range_json(const SweepRange& r) { return {{"lo", r.lo}, {"hi", r.hi}, {"count", r.count}}; }

SweepRange range_from(const json& j) {
    return {j.at("lo").get<double>(), j.at("hi").get<double>(), j.at("count").get<std::size_t>()};
}

}  // namespace

json options_to_json(const RunOptions& o) {
    json j;
    j["command"] = o.command;
    put(j, "grid_n", o.grid_n);
    put(j, "seed", o.seed);
    put(j, "tol", o.tol);
    put(j, "max_iter", o.max_iter);
    put(j, "damping", o.damping);
    put(j, "method", o.method);
    put(j, "rounds", o.rounds);
    put(j, "noise", o.noise);
    put(j, "pde_time_steps", o.pde_time_steps);
    put(j, "pde_q_intervals", o.pde_q_intervals);
    j["dump_fields"] = o.dump_fields;
    j["check_uniqueness"] = o.check_uniqueness;
    put(j, "paths", o.paths);
    put(j, "steps", o.steps);
    put(j, "S0", o.S0);
    j["deviation"] = o.deviation;
    j["dump_paths"] = o.dump_paths;
    j["sweep"] = {{"alpha", range_json(o.sweep_alpha)},
                  {"kappa", range_json(o.sweep_kappa)},
                  {"phi", range_json(o.sweep_phi)},
                  {"A", o.sweep_A},
                  {"T", o.sweep_T},
                  {"E0", o.sweep_E0}};
    return j;
}

RunOptions options_from_json(const json& j) {
    RunOptions o;
    o.command = j.at("command").get<std::string>();
    get(j, "grid_n", o.grid_n);
    get(j, "seed", o.seed);
    get(j, "tol", o.tol);
    get(j, "max_iter", o.max_iter);
    get(j, "damping", o.damping);
    get(j, "method", o.method);
    get(j, "rounds", o.rounds);
    get(j, "noise", o.noise);
    get(j, "pde_time_steps", o.pde_time_steps);
    get(j, "pde_q_intervals", o.pde_q_intervals);
    o.dump_fields = j.value("dump_fields", false);
    o.check_uniqueness = j.value("check_uniqueness", false);
    get(j, "paths", o.paths);
    get(j, "steps", o.steps);
    get(j, "S0", o.S0);
    o.deviation = j.value("deviation", false);
    o.dump_paths = j.value("dump_paths", false);
    if (j.contains("sweep")) {
        const auto& s = j.at("sweep");
        o.sweep_alpha = range_from(s.at("alpha"));
        o.sweep_kappa = range_from(s.at("kappa"));
        o.sweep_phi = range_from(s.at("phi"));
        o.sweep_A = s.at("A").get<double>();
        o.sweep_T = s.at("T").get<double>();
        o.sweep_E0 = s.at("E0").get<double>();
    }
    return o;
}

namespace {

struct Context {
    const RunOptions& options;
    Scenario scenario;
    TimeGrid grid;
    RunResult result;

    void emit(const std::string& name, std::string_view content) {
        const auto path = options.out_dir / name;
        write_file_atomic(path, content);
        result.outputs.push_back(path);
    }
};

Scenario scenario_for(const RunOptions& o) {
    if (o.scenario_text.empty()) throw ScenarioError("command '" + o.command + "' needs a scenario");
    Scenario sc = parse_scenario(o.scenario_text,
                                 o.scenario_source.empty() ? "<scenario>" : o.scenario_source);
    if (o.grid_n) {
        if (*o.grid_n < 2) throw ScenarioError("--grid-n must be at least 2");
        sc.grid.N = *o.grid_n;
    }
    require_valid(sc.market, sc.population);
    return sc;
}

Preference homogeneous_preference(const PopulationSpec& pop, const char* alternative) {
    if (!pop.identical_preferences())
        throw ScenarioError(std::string("types have different (phi, A); use the '") + alternative +
                            "' command");
    Preference pref = pop.types.front().pref;
    pref.E0 = pop.mean_initial_inventory();
    return pref;
}

void run_closed_form(Context& ctx) {
    const auto& sc = ctx.scenario;
    const Preference pref = homogeneous_preference(sc.population, "hetero");
    const HomogeneousSolution sol(sc.market, pref, sc.grid.N);
    CsvWriter csv({"t", "E", "Eprime", "h0", "h1", "neg_h1", "h2", "mu"});
    for (std::size_t i = 0; i < ctx.grid.size(); ++i) {
        const double t = ctx.grid.node(i);
        const double h1 = sol.h1(t);
        csv.cell(t).cell(sol.E(t)).cell(sol.E_prime(t)).cell(sol.h0(t)).cell(h1).cell(-h1)
            .cell(sol.h2(t)).cell(sol.mu(t));
        csv.end_row();
    }
    ctx.emit("closed_form.csv", csv.str());
    const auto tm = find_slope_reversal(sol);
    ctx.result.results = {{"E_T", sol.E(sc.market.T)},
                          {"h1_0", sol.h1(0.0)},
                          {"theta", sol.theta()},
                          {"a_coef", sol.a_coef()},
                          {"t_m", tm ? json(*tm) : json(nullptr)}};
}

EquilibriumFlow solve_flow(const Context& ctx, const FlowOperator& op) {
    const auto& s = ctx.scenario.solver;
    const std::string method = ctx.options.method.value_or(s.method);
    if (method == "direct") return solve_direct(op);
    if (method != "picard") throw ScenarioError("unknown method '" + method + "'");
    PicardOptions po;
    po.tol = ctx.options.tol.value_or(s.tol);
    po.max_iter = ctx.options.max_iter.value_or(s.max_iter);
    po.damping = ctx.options.damping.value_or(s.damping);
    if (!(po.tol > 0.0)) throw ScenarioError("tol must be positive");
    if (!(po.damping > 0.0 && po.damping <= 1.0)) throw ScenarioError("damping must lie in (0, 1]");
    return solve_picard(op, po);
}

void run_hetero(Context& ctx) {
    const auto& sc = ctx.scenario;
    const FlowOperator op(sc.market, sc.population, ctx.grid);
    const EquilibriumFlow flow = solve_flow(ctx, op);

    CsvWriter mu_csv({"t", "mu"});
    for (std::size_t i = 0; i < ctx.grid.size(); ++i) {
        mu_csv.cell(ctx.grid.node(i)).cell(flow.mu[i]);
        mu_csv.end_row();
    }
    ctx.emit("hetero_flow.csv", mu_csv.str());

    const std::size_t K = sc.population.size();
    std::vector<TypeSolution> types;
    std::vector<std::string> header{"t"};
    for (std::size_t k = 0; k < K; ++k) {
        types.push_back(recover_type_solution(sc.market, sc.population, k, flow));
        header.push_back("h1_" + std::to_string(k));
        header.push_back("E_" + std::to_string(k));
    }
    CsvWriter type_csv(header);
    for (std::size_t i = 0; i < ctx.grid.size(); ++i) {
        type_csv.cell(ctx.grid.node(i));
        for (const auto& ts : types) type_csv.cell(ts.h1[i]).cell(ts.E[i]);
        type_csv.end_row();
    }
    ctx.emit("hetero_types.csv", type_csv.str());

    CsvWriter hist({"iteration", "residual"});
    for (std::size_t i = 0; i < flow.residual_history.size(); ++i) {
        hist.cell(i + 1).cell(flow.residual_history[i]);
        hist.end_row();
    }
    ctx.emit("hetero_residuals.csv", hist.str());

    ctx.result.results = {{"method", to_string(flow.method)},
                          {"iterations", flow.iterations},
                          {"residual", flow.residual},
                          {"contraction_factor", op.contraction_factor()}};
}

void run_learn(Context& ctx) {
    const auto& sc = ctx.scenario;
    LearningConfig config;
    config.rounds = ctx.options.rounds.value_or(sc.solver.rounds);
    config.weight_constants = sc.learning_constants;
    config.bound_C = sc.solver.bound_C;
    config.noise = ctx.options.noise.value_or(sc.solver.noise);
    config.seed = ctx.options.seed.value_or(sc.solver.seed);
    const std::size_t K = sc.population.size();
    const auto trace = run_learning(sc.market, sc.population, ctx.grid, config,
                                    uniform_beliefs(K, std::vector<double>(ctx.grid.size(), 0.0)));

    std::vector<std::string> header{"round", "sup_error"};
    for (std::size_t k = 0; k < K; ++k) header.push_back("error_" + std::to_string(k));
    CsvWriter csv(header);
    std::optional<std::size_t> first_below;
    for (std::size_t n = 0; n < trace.sup_error.size(); ++n) {
        csv.cell(n + 1).cell(trace.sup_error[n]);
        for (double e : trace.type_error[n]) csv.cell(e);
        csv.end_row();
        if (!first_below && trace.sup_error[n] <= 1e-4) first_below = n + 1;
    }
    ctx.emit("learning.csv", csv.str());
    ctx.result.results = {
        {"rounds", config.rounds},
        {"noise", config.noise},
        {"seed", config.seed},
        {"final_sup_error", trace.sup_error.back()},
        {"tail_error", trace.tail_error},
        {"empirical_constant",
         std::isnan(trace.empirical_constant) ? json(nullptr) : json(trace.empirical_constant)},
        {"first_round_below_1e-4", first_below ? json(*first_below) : json(nullptr)}};
}

void run_pde(Context& ctx) {
    const auto& sc = ctx.scenario;
    const std::size_t nt = ctx.options.pde_time_steps.value_or(sc.grid.pde_time_steps);
    const std::size_t nq = ctx.options.pde_q_intervals.value_or(sc.grid.pde_q_intervals);
    PdeGrid grid = default_pde_grid(sc.market, sc.population, nt, nq);
    if (sc.grid.q_min) grid.q_min = *sc.grid.q_min;
    if (sc.grid.q_max) grid.q_max = *sc.grid.q_max;
    grid.validate();

    PdeOptions po;
    po.tol = ctx.options.tol.value_or(sc.solver.pde_tol);
    po.max_iter = ctx.options.max_iter.value_or(sc.solver.pde_max_iter);
    po.damping = ctx.options.damping.value_or(sc.solver.pde_damping);
    po.check_uniqueness = ctx.options.check_uniqueness;
    const PdeState state = solve_mfg_fixed_point(sc.market, sc.population, grid, po);

    const std::size_t K = sc.population.size();
    std::optional<HomogeneousSolution> exact;
    if (sc.population.identical_preferences())
        exact.emplace(sc.market, homogeneous_preference(sc.population, "pde"), sc.grid.N);

    std::vector<std::string> header{"t", "mu", "mean_inventory"};
    for (std::size_t k = 0; k < K; ++k) header.push_back("E_" + std::to_string(k));
    if (exact) {
        header.push_back("E_closed_form");
        header.push_back("mu_closed_form");
    }
    CsvWriter csv(header);
    for (std::size_t n = 0; n < grid.time_nodes(); ++n) {
        const double t = grid.t(n);
        csv.cell(t).cell(state.mu[n]).cell(state.mean_inventory[n]);
        for (std::size_t k = 0; k < K; ++k) csv.cell(state.type_moments[k][n]);
        if (exact) csv.cell(exact->E(t)).cell(exact->mu(t));
        csv.end_row();
    }
    ctx.emit("pde_flow.csv", csv.str());

    CsvWriter hist({"iteration", "residual"});
    for (std::size_t i = 0; i < state.residual_history.size(); ++i) {
        hist.cell(i + 1).cell(state.residual_history[i]);
        hist.end_row();
    }
    ctx.emit("pde_residuals.csv", hist.str());

    if (ctx.options.dump_fields) {
        for (std::size_t k = 0; k < K; ++k) {
            for (const auto& [name, field] :
                 {std::pair{"v_", &state.v[k]}, std::pair{"m_", &state.m[k]}}) {
                std::ostringstream buf(std::ios::binary);
                write_field(buf, *field);
                ctx.emit(name + std::to_string(k) + ".bin", buf.str());
            }
        }
    }

    double rel_error = std::nan("");
    if (exact) {
        double num = 0.0, den = 0.0;
        for (std::size_t n = 0; n < grid.time_nodes(); ++n) {
            const double e = exact->E(grid.t(n));
            num = std::max(num, std::abs(state.mean_inventory[n] - e));
            den = std::max(den, std::abs(e));
        }
        rel_error = den > 0.0 ? num / den : num;
    }
    ctx.result.results = {{"iterations", state.iterations},
                          {"residual", state.residual},
                          {"max_mass_error", state.max_mass_error},
                          {"leaked_mass", state.leaked_mass},
                          {"q_min", grid.q_min},
                          {"q_max", grid.q_max},
                          {"warnings", state.warnings},
                          {"relative_error_vs_closed_form",
                           std::isnan(rel_error) ? json(nullptr) : json(rel_error)}};
}

void run_simulate(Context& ctx) {
    const auto& sc = ctx.scenario;
    std::unique_ptr<TradingEquilibrium> eq;
    const HomogeneousEquilibrium* homogeneous = nullptr;
    if (sc.population.identical_preferences()) {
        auto h = std::make_unique<HomogeneousEquilibrium>(sc.market, sc.population, sc.grid.N);
        homogeneous = h.get();
        eq = std::move(h);
    } else {
        const FlowOperator op(sc.market, sc.population, ctx.grid);
        eq = std::make_unique<HeteroEquilibrium>(sc.market, sc.population, solve_flow(ctx, op));
    }

    SimConfig config;
    config.paths = ctx.options.paths.value_or(sc.solver.paths);
    config.steps = ctx.options.steps.value_or(sc.solver.steps == 0 ? 10 * sc.grid.N : sc.solver.steps);
    config.seed = ctx.options.seed.value_or(sc.solver.seed);
    config.S0 = ctx.options.S0.value_or(sc.solver.S0);
    config.representative = sc.solver.representative;
    config.agents_per_type = sc.solver.agents_per_type;
    config.keep_paths = ctx.options.dump_paths;
    const PathEnsemble ens = simulate(*eq, config);

    const std::size_t K = sc.population.size();
    std::vector<std::string> header{"t", "mean_S"};
    for (std::size_t k = 0; k < K; ++k) {
        const auto s = std::to_string(k);
        for (const char* c : {"mean_Q_", "q05_", "q50_", "q95_", "E_"}) header.push_back(c + s);
    }
    CsvWriter inv(header);
    for (std::size_t j = 0; j < ens.summary_times.size(); ++j) {
        const double t = ens.summary_times[j];
        inv.cell(t).cell(ens.mean_price[j]);
        for (std::size_t k = 0; k < K; ++k) {
            const auto& ts = ens.types[k];
            inv.cell(ts.mean_inventory[j]).cell(ts.q05[j]).cell(ts.q50[j]).cell(ts.q95[j])
                .cell(eq->type_mean(k, t));
        }
        inv.end_row();
    }
    ctx.emit("simulate_inventory.csv", inv.str());

    CsvWriter obj({"type", "mean_J", "stderr_J", "closed_form_value"});
    json type_results = json::array();
    for (std::size_t k = 0; k < K; ++k) {
        std::optional<double> value;
        if (homogeneous && config.representative)
            value = full_value(homogeneous->solution(), 0.0, 0.0, config.S0,
                               sc.population.types[k].pref.E0);
        obj.cell(k).cell(ens.types[k].mean_objective).cell(ens.types[k].stderr_objective).cell(value);
        obj.end_row();
        type_results.push_back({{"mean_J", ens.types[k].mean_objective},
                                {"stderr_J", ens.types[k].stderr_objective},
                                {"closed_form_value", value ? json(*value) : json(nullptr)}});
    }
    ctx.emit("simulate_objective.csv", obj.str());
    ctx.result.results = {{"paths", config.paths}, {"steps", config.steps}, {"seed", config.seed},
                          {"types", type_results}};

    if (ctx.options.deviation) {
        CsvWriter dev({"type", "kind", "value", "mean_optimal", "mean_deviating", "mean_difference",
                       "stderr_difference", "deviation_worse"});
        bool all_worse = true;
        for (std::size_t k = 0; k < K; ++k) {
            const double offset = 0.1 * std::abs(sc.population.types[k].pref.E0) / sc.market.T;
            const std::vector<Perturbation> cases{{Perturbation::Kind::factor, 0.8, k},
                                                  {Perturbation::Kind::factor, 1.2, k},
                                                  {Perturbation::Kind::offset, offset, k},
                                                  {Perturbation::Kind::offset, -offset, k}};
            for (const auto& pert : cases) {
                SimConfig dc = config;
                dc.keep_paths = false;
                const auto rep = deviation_test(*eq, dc, pert);
                all_worse = all_worse && rep.deviation_worse;
                dev.cell(k)
                    .cell(pert.kind == Perturbation::Kind::factor ? "factor" : "offset")
                    .cell(pert.value)
                    .cell(rep.mean_optimal)
                    .cell(rep.mean_deviating)
                    .cell(rep.mean_difference)
                    .cell(rep.stderr_difference)
                    .cell(rep.deviation_worse ? "true" : "false");
                dev.end_row();
            }
        }
        ctx.emit("deviation.csv", dev.str());
        ctx.result.results["all_deviations_worse"] = all_worse;
    }

    if (ctx.options.dump_paths) {
        const std::size_t A = ens.agents_per_path;
        std::vector<std::string> ph{"path", "step", "S"};
        for (std::size_t a = 0; a < A; ++a) {
            ph.push_back("Q_" + std::to_string(a));
            ph.push_back("X_" + std::to_string(a));
        }
        CsvWriter paths(ph);
        for (std::size_t p = 0; p < ens.paths.size(); ++p) {
            const auto& rec = ens.paths[p];
            for (std::size_t i = 0; i < rec.S.size(); ++i) {
                paths.cell(p).cell(i).cell(rec.S[i]);
                for (std::size_t a = 0; a < A; ++a) paths.cell(rec.Q[a][i]).cell(rec.X[a][i]);
                paths.end_row();
            }
        }
        ctx.emit("paths.csv", paths.str());
    }
}

void run_sweep_tm(Context& ctx) {
    const auto& o = ctx.options;
    const auto phis = o.sweep_phi.values();
    const auto alphas = o.sweep_alpha.values();
    const auto kappas = o.sweep_kappa.values();
    struct Point {
        double phi, alpha, kappa;
        std::optional<double> tm;
    };
    std::vector<Point> points;
    for (double phi : phis)
        for (double alpha : alphas)
            for (double kappa : kappas) points.push_back({phi, alpha, kappa, std::nullopt});
    parallel_for(points.size(), [&](std::size_t i) {
        auto& pt = points[i];
        const MarketParams market{pt.alpha, pt.kappa, 0.0, o.sweep_T};
        const Preference pref{pt.phi, o.sweep_A, o.sweep_E0};
        require_valid(market, PopulationSpec::single(pref));
        pt.tm = find_slope_reversal(HomogeneousSolution(market, pref, 2));
    });
    std::sort(points.begin(), points.end(), [](const Point& a, const Point& b) {
        return std::tie(a.phi, a.alpha, a.kappa) < std::tie(b.phi, b.alpha, b.kappa);
    });

    CsvWriter csv({"phi", "alpha", "kappa", "t_m"});
    std::vector<std::size_t> counts(phis.size(), 0);
    for (const auto& pt : points) {
        csv.cell(pt.phi).cell(pt.alpha).cell(pt.kappa).cell(pt.tm);
        csv.end_row();
        if (pt.tm) {
            const auto slice = std::lower_bound(phis.begin(), phis.end(), pt.phi) - phis.begin();
            ++counts[static_cast<std::size_t>(slice)];
        }
    }
    ctx.emit("sweep_tm.csv", csv.str());

    // Slices sorted by increasing phi; the reversal region should not grow with phi.
    std::vector<std::pair<double, std::size_t>> slices;
    for (std::size_t i = 0; i < phis.size(); ++i) slices.emplace_back(phis[i], counts[i]);
    std::sort(slices.begin(), slices.end());
    CsvWriter cc({"phi", "reversal_count"});
    bool monotone = true;
    for (std::size_t i = 0; i < slices.size(); ++i) {
        cc.cell(slices[i].first).cell(slices[i].second);
        cc.end_row();
        if (i > 0 && slices[i].second > slices[i - 1].second) monotone = false;
    }
    ctx.emit("sweep_tm_counts.csv", cc.str());
    std::size_t total = 0;
    for (auto c : counts) total += c;
    ctx.result.results = {{"points", points.size()},
                          {"reversals", total},
                          {"monotone_in_phi", monotone}};
}

}  // namespace

RunResult run_command(const RunOptions& options) {
    const auto start = std::chrono::steady_clock::now();
    std::filesystem::create_directories(options.out_dir);

    const bool needs_scenario = options.command != "sweep-tm";
    Scenario sc = needs_scenario ? scenario_for(options) : Scenario{};
    const TimeGrid grid = needs_scenario ? TimeGrid(sc.market.T, sc.grid.N) : TimeGrid(1.0, 2);
    Context ctx{options, std::move(sc), grid, {}};

    if (options.command == "closed-form") run_closed_form(ctx);
    else if (options.command == "hetero") run_hetero(ctx);
    else if (options.command == "learn") run_learn(ctx);
    else if (options.command == "pde") run_pde(ctx);
    else if (options.command == "simulate") run_simulate(ctx);
    else if (options.command == "sweep-tm") run_sweep_tm(ctx);
    else throw ScenarioError("unknown command '" + options.command + "'");

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json manifest;
    manifest["tool"] = "crowdtrade";
    manifest["version"] = std::string(kToolVersion);
    manifest["command"] = options.command;
    manifest["scenario"] = {{"source", options.scenario_source}, {"text", options.scenario_text}};
    manifest["options"] = options_to_json(options);
    manifest["seed"] = options.seed ? json(*options.seed)
                       : needs_scenario ? json(ctx.scenario.solver.seed)
                                        : json(nullptr);
    manifest["wall_time_seconds"] = wall;
    json outputs = json::array();
    for (const auto& p : ctx.result.outputs) outputs.push_back(p.filename().string());
    manifest["outputs"] = outputs;
    manifest["results"] = ctx.result.results;

    ctx.result.manifest = options.out_dir / "manifest.json";
    write_file_atomic(ctx.result.manifest, manifest.dump(2) + "\n");
    return std::move(ctx.result);
}

RunOptions options_from_manifest(const std::filesystem::path& manifest,
                                 const std::filesystem::path& out_dir) {
    std::ifstream in(manifest, std::ios::binary);
    if (!in) throw ScenarioError("cannot open manifest '" + manifest.string() + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ScenarioError("malformed manifest '" + manifest.string() + "': " + e.what());
    }
    try {
        RunOptions o = options_from_json(j.at("options"));
        o.scenario_source = j.at("scenario").at("source").get<std::string>();
        o.scenario_text = j.at("scenario").at("text").get<std::string>();
        o.out_dir = out_dir;
        return o;
    } catch (const json::exception& e) {
        throw ScenarioError("incomplete manifest '" + manifest.string() + "': " + e.what());
    }
}

}  // namespace crowdtrade
