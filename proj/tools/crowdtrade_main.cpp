#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "crowdtrade/core_model.hpp"
#include "crowdtrade/errors.hpp"
#include "crowdtrade/experiments.hpp"
#include "crowdtrade/scenario.hpp"

using namespace crowdtrade;

namespace {

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ScenarioError("cannot open scenario file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void add_range(CLI::App* app, const std::string& name, SweepRange& range) {
    app->add_option("--" + name + "-min", range.lo, name + " lower bound")->capture_default_str();
    app->add_option("--" + name + "-max", range.hi, name + " upper bound")->capture_default_str();
    app->add_option("--" + name + "-count", range.count, name + " sample count")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
}

int run_validate(const std::string& scenario_path) {
    const Scenario sc = load_scenario(scenario_path);
    const ValidationReport report = validate_scenario(sc.market, sc.population);
    std::cout << report.describe();
    return report.ok() ? kExitOk : kExitScenario;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Crowd trading mean-field game solvers"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);

    RunOptions opt;
    std::string scenario_path;
    std::string out_dir = ".";
    std::string manifest_path;

    auto common = [&](CLI::App* sub, bool scenario_required) {
        auto* s = sub->add_option("--scenario", scenario_path, "Scenario file");
        if (scenario_required) s->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "Output directory")->capture_default_str();
        sub->add_option("--grid-n", opt.grid_n, "Time grid steps N");
        sub->add_option("--seed", opt.seed, "Random seed");
        sub->add_option("--tol", opt.tol, "Fixed-point tolerance");
        sub->add_option("--max-iter", opt.max_iter, "Fixed-point iteration cap");
        sub->add_option("--damping", opt.damping, "Fixed-point damping in (0, 1]");
    };

    auto* closed = app.add_subcommand("closed-form", "Homogeneous closed-form curves");
    common(closed, true);

    auto* hetero = app.add_subcommand("hetero", "Heterogeneous equilibrium flow");
    common(hetero, true);
    hetero->add_option("--method", opt.method, "direct or picard")
        ->check(CLI::IsMember({"direct", "picard"}));

    auto* learn = app.add_subcommand("learn", "Repeated-round learning dynamics");
    common(learn, true);
    learn->add_option("--rounds", opt.rounds, "Number of rounds")->check(CLI::PositiveNumber);
    learn->add_option("--noise", opt.noise, "Observation noise amplitude")
        ->check(CLI::NonNegativeNumber);

    auto* pde = app.add_subcommand("pde", "Finite-difference MFG solver");
    common(pde, true);
    pde->add_option("--time-steps", opt.pde_time_steps, "Output time steps");
    pde->add_option("--q-intervals", opt.pde_q_intervals, "Inventory intervals");
    pde->add_flag("--dump-fields", opt.dump_fields, "Write binary v and m fields");
    pde->add_flag("--check-uniqueness", opt.check_uniqueness,
                  "Re-solve from a second start and warn on disagreement");

    auto* sim = app.add_subcommand("simulate", "Monte Carlo population simulation");
    common(sim, true);
    sim->add_option("--paths", opt.paths, "Number of paths")->check(CLI::PositiveNumber);
    sim->add_option("--steps", opt.steps, "Integration steps")->check(CLI::PositiveNumber);
    sim->add_option("--s0", opt.S0, "Initial price");
    sim->add_flag("--deviation", opt.deviation, "Run the unilateral deviation table");
    sim->add_flag("--dump-paths", opt.dump_paths, "Write every path to paths.csv");

    auto* sweep = app.add_subcommand("sweep-tm", "Slope-reversal time over a parameter box");
    sweep->add_option("--out", out_dir, "Output directory")->capture_default_str();
    add_range(sweep, "alpha", opt.sweep_alpha);
    add_range(sweep, "kappa", opt.sweep_kappa);
    add_range(sweep, "phi", opt.sweep_phi);
    sweep->add_option("--A", opt.sweep_A, "Terminal penalty")->capture_default_str();
    sweep->add_option("--T", opt.sweep_T, "Horizon")->capture_default_str();
    sweep->add_option("--E0", opt.sweep_E0, "Initial inventory")->capture_default_str();

    auto* validate = app.add_subcommand("validate", "Check a scenario file");
    validate->add_option("--scenario", scenario_path, "Scenario file")
        ->required()
        ->check(CLI::ExistingFile);

    auto* rerun = app.add_subcommand("rerun", "Repeat a run recorded in a manifest");
    rerun->add_option("--manifest", manifest_path, "manifest.json of an earlier run")
        ->required()
        ->check(CLI::ExistingFile);
    rerun->add_option("--out", out_dir, "Output directory")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // --help and --version exit 0, usage mistakes count as bad input.
        return app.exit(e) == 0 ? kExitOk : kExitScenario;
    }

    try {
        if (validate->parsed()) return run_validate(scenario_path);
        if (rerun->parsed()) {
            opt = options_from_manifest(manifest_path, out_dir);
        } else {
            opt.command = app.get_subcommands().front()->get_name();
            opt.out_dir = out_dir;
            if (!scenario_path.empty()) {
                opt.scenario_source = scenario_path;
                opt.scenario_text = read_text(scenario_path);
            }
        }
        const RunResult result = run_command(opt);
        for (const auto& p : result.outputs) std::cout << p.string() << '\n';
        std::cout << result.manifest.string() << '\n';
        return kExitOk;
    } catch (const ScenarioError& e) {
        std::cerr << "scenario error: " << e.what() << '\n';
        return kExitScenario;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}
