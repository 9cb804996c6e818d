#include "crowdtrade/learning_dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "crowdtrade/counter_rng.hpp"
#include "crowdtrade/errors.hpp"
#include "crowdtrade/hetero_equilibrium.hpp"

namespace crowdtrade {

namespace {

class Aggregator {
public:
    Aggregator(const MarketParams& market, const PopulationSpec& pop, const TimeGrid& grid)
        : market_(market), pop_(pop), grid_(grid), offset_(grid.size(), 0.0) {
        require_hetero_eligible(market, pop);
        for (const auto& type : pop.types) {
            const double th = type.pref.A / market.kappa;
            thetas_.push_back(th);
            for (std::size_t i = 0; i < grid.size(); ++i) {
                offset_[i] -= type.weight * th * std::exp(-th * grid.node(i)) * type.pref.E0;
            }
        }
    }

    std::vector<double> operator()(const Beliefs& beliefs) const {
        if (beliefs.size() != pop_.size()) {
            throw ScenarioError("need exactly one belief per population type");
        }
        std::vector<double> out = offset_;
        if (market_.alpha == 0.0) return out;
        for (std::size_t k = 0; k < pop_.size(); ++k) {
            const auto response = type_flow_response(thetas_[k], market_.kappa, grid_, beliefs[k]);
            const double scale = market_.alpha * pop_.types[k].weight;
            for (std::size_t i = 0; i < out.size(); ++i) out[i] += scale * response[i];
        }
        return out;
    }

private:
    MarketParams market_;
    PopulationSpec pop_;
    TimeGrid grid_;
    std::vector<double> thetas_;
    std::vector<double> offset_;
};

}  // namespace

void validate_learning_config(const LearningConfig& config, std::size_t type_count) {
    if (config.rounds < 1) throw ScenarioError("learning needs at least one round");
    if (!(config.bound_C >= 1.0) || !std::isfinite(config.bound_C)) {
        throw ScenarioError("learning weight bound C must be finite and >= 1");
    }
    if (!(config.noise >= 0.0) || !std::isfinite(config.noise)) {
        throw ScenarioError("learning noise amplitude must be finite and >= 0");
    }
    if (!config.weight_constants.empty() && config.weight_constants.size() != type_count) {
        throw ScenarioError("need one learning weight constant per type");
    }
    for (std::size_t k = 0; k < config.weight_constants.size(); ++k) {
        const double c = config.weight_constants[k];
        if (!(c >= 1.0 / config.bound_C && c <= config.bound_C)) {
            std::ostringstream msg;
            msg << "learning weight constant c_" << k << " = " << c << " violates 1/C <= c <= C"
                << " with C = " << config.bound_C;
            throw ScenarioError(msg.str());
        }
    }
}

double learning_weight(const LearningConfig& config, std::size_t k, std::size_t n) {
    const double c = config.weight_constants.empty() ? 1.0 : config.weight_constants.at(k);
    return std::clamp(c / static_cast<double>(n), 0.0, 1.0);
}

std::vector<double> aggregate_flow(const MarketParams& market, const PopulationSpec& pop,
                                   const TimeGrid& grid, const Beliefs& beliefs) {
    return Aggregator(market, pop, grid)(beliefs);
}

Beliefs update_beliefs(const Beliefs& beliefs, const std::vector<double>& m_next,
                       const LearningConfig& config, std::size_t n) {
    const std::size_t round = n + 1;
    Beliefs out = beliefs;
    for (std::size_t k = 0; k < out.size(); ++k) {
        const double pi = learning_weight(config, k, round);
        auto& belief = out[k];
        if (belief.size() != m_next.size()) {
            throw ScenarioError("belief and realized flow have different lengths");
        }
        for (std::size_t i = 0; i < belief.size(); ++i) {
            const double eps = config.noise == 0.0
                                   ? 0.0
                                   : config.noise * counter_symmetric_uniform(config.seed, k,
                                                                              round, i);
            belief[i] = (1.0 - pi) * belief[i] + pi * (m_next[i] + eps);
        }
    }
    return out;
}

Beliefs uniform_beliefs(std::size_t type_count, const std::vector<double>& belief) {
    return Beliefs(type_count, belief);
}

LearningTrace run_learning(const MarketParams& market, const PopulationSpec& pop,
                           const TimeGrid& grid, const LearningConfig& config,
                           const Beliefs& initial_beliefs) {
    validate_learning_config(config, pop.size());
    const FlowOperator op(market, pop, grid);
    const auto equilibrium = solve_direct(op);
    const Aggregator aggregate(market, pop, grid);

    LearningTrace trace;
    trace.equilibrium = equilibrium.mu;
    double scale = 1.0;
    for (double v : equilibrium.mu) scale = std::max(scale, std::abs(v));

    Beliefs beliefs = initial_beliefs;
    trace.sup_error.reserve(config.rounds);
    trace.type_error.reserve(config.rounds);
    for (std::size_t n = 0; n < config.rounds; ++n) {
        const auto realized = aggregate(beliefs);
        beliefs = update_beliefs(beliefs, realized, config, n);
        std::vector<double> errors(pop.size(), 0.0);
        for (std::size_t k = 0; k < pop.size(); ++k) {
            for (std::size_t i = 0; i < grid.size(); ++i) {
                errors[k] = std::max(errors[k], std::abs(beliefs[k][i] - equilibrium.mu[i]));
            }
        }
        const double e = *std::max_element(errors.begin(), errors.end());
        if (!std::isfinite(e) || e > 1e12 * scale) {
            std::ostringstream msg;
            msg << "learning iterates diverged at round " << n + 1 << " (sup error " << e
                << "); |alpha| is too large for this weight schedule";
            throw NumericalError(msg.str());
        }
        trace.sup_error.push_back(e);
        trace.type_error.push_back(std::move(errors));
    }
    const std::size_t tail_start = config.rounds - std::max<std::size_t>(1, config.rounds / 10);
    trace.tail_error =
        *std::max_element(trace.sup_error.begin() + static_cast<std::ptrdiff_t>(tail_start),
                          trace.sup_error.end());
    trace.empirical_constant = config.noise > 0.0 ? trace.tail_error / config.noise
                                                  : std::numeric_limits<double>::quiet_NaN();
    trace.final_beliefs = std::move(beliefs);
    return trace;
}

}  // namespace crowdtrade
