#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "crowdtrade/core_model.hpp"

namespace crowdtrade {

/// Discretization settings read from the [grid] section.
struct GridSettings {
    std::size_t N = 1000;
    std::size_t pde_time_steps = 2000;
    std::size_t pde_q_intervals = 400;
    std::optional<double> q_min;
    std::optional<double> q_max;
};

/// Solver and experiment settings read from the [solver] section.
struct SolverSettings {
    std::string method = "direct";
    double tol = 1e-10;
    std::size_t max_iter = 10000;
    double damping = 1.0;
    double pde_tol = 1e-8;
    std::size_t pde_max_iter = 500;
    double pde_damping = 0.5;
    std::uint64_t seed = 0;
    std::size_t rounds = 10000;
    double noise = 0.0;
    double bound_C = 1.0;
    std::size_t paths = 10000;
    /// 0 means 10 * N.
    std::size_t steps = 0;
    double S0 = 100.0;
    bool representative = true;
    std::size_t agents_per_type = 1;
};

struct Scenario {
    MarketParams market;
    PopulationSpec population;
    /// c_k of the learning schedule, one per type (key `learning_c`, default 1).
    std::vector<double> learning_constants;
    GridSettings grid;
    SolverSettings solver;
    /// Original file contents, echoed into run manifests.
    std::string text;
};

/**
 * Parses an INI-style scenario:
 *
 *   [market]        alpha, kappa, sigma, T
 *   [population.k]  weight, phi, A (number or `matched`), E0, stdev, learning_c
 *   [grid]          N, pde_time_steps, pde_q_intervals, q_min, q_max
 *   [solver]        method, tol, max_iter, damping, pde_tol, pde_max_iter,
 *                   pde_damping, seed, rounds, noise, bound_C, paths, steps,
 *                   S0, representative, agents_per_type
 *
 * `#` and `;` start comments. Population sections must be numbered 0, 1, ...
 * without gaps. Errors are ScenarioError messages prefixed with
 * "<source>:<line>:".
 */
Scenario parse_scenario(const std::string& text, const std::string& source = "<scenario>");
Scenario load_scenario(const std::filesystem::path& path);

}  // namespace crowdtrade
