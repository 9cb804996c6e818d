#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "crowdtrade/core_model.hpp"

namespace crowdtrade {

/**
 * Repeated-round belief dynamics. Type k updates its belief in round n with
 * weight pi_{k,n} = clamp(c_k / n, 0, 1) towards the realized aggregate flow
 * observed with uniform noise on [-noise, noise], drawn from a counter-based
 * hash of (seed, k, n, node).
 */
struct LearningConfig {
    std::size_t rounds = 10000;
    /// c_k per type; empty means c_k = 1 for every type.
    std::vector<double> weight_constants;
    /// Two-sided bound 1/C <= c_k <= C.
    double bound_C = 1.0;
    double noise = 0.0;
    std::uint64_t seed = 0;
};

using Beliefs = std::vector<std::vector<double>>;

struct LearningTrace {
    /// e_n = max_k sup_t |mu^{k,n} - mu*| after round n, n = 1..rounds.
    std::vector<double> sup_error;
    /// type_error[n-1][k] = sup_t |mu^{k,n} - mu*|.
    std::vector<std::vector<double>> type_error;
    std::vector<double> equilibrium;
    Beliefs final_beliefs;
    /// Max of e_n over the last 10% of rounds.
    double tail_error = 0.0;
    /// tail_error / noise, NaN when noise = 0.
    double empirical_constant = 0.0;
};

/// Throws ScenarioError when the schedule or noise settings are invalid for `type_count` types.
void validate_learning_config(const LearningConfig& config, std::size_t type_count);

/// pi_{k,n} for round n >= 1.
double learning_weight(const LearningConfig& config, std::size_t k, std::size_t n);

/// Realized aggregate flow when type k trades against belief beliefs[k].
std::vector<double> aggregate_flow(const MarketParams& market, const PopulationSpec& pop,
                                   const TimeGrid& grid, const Beliefs& beliefs);

/// Beliefs after round n + 1 given the realized flow of round n.
Beliefs update_beliefs(const Beliefs& beliefs, const std::vector<double>& m_next,
                       const LearningConfig& config, std::size_t n);

/// Runs all rounds against the direct-solve equilibrium. Throws NumericalError on blow-up.
LearningTrace run_learning(const MarketParams& market, const PopulationSpec& pop,
                           const TimeGrid& grid, const LearningConfig& config,
                           const Beliefs& initial_beliefs);

/// Every type starts from the same belief.
Beliefs uniform_beliefs(std::size_t type_count, const std::vector<double>& belief);

}  // namespace crowdtrade
