#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

/**
 * Domain types shared by every solver.
 *
 * Units are abstract and never checked at runtime: inventories in shares,
 * prices and values in currency, times in a common time unit. Trading speeds
 * and the net flow are shares per unit time.
 */
namespace crowdtrade {

/// Market-wide constants of the price and wealth dynamics.
struct MarketParams {
    double alpha = 0.0;  ///< permanent impact per unit of net flow (any sign)
    double kappa = 1.0;  ///< temporary impact per unit of own speed (> 0)
    double sigma = 0.0;  ///< price volatility (>= 0)
    double T = 1.0;      ///< horizon (> 0)
};

/// Risk preferences and initial net inventory of one agent type.
struct Preference {
    double phi = 0.0;  ///< running inventory penalty (>= 0)
    double A = 0.0;    ///< terminal inventory penalty (>= 0)
    double E0 = 0.0;   ///< mean initial inventory (any sign)
};

/// One atom of the preference distribution.
struct PopulationType {
    double weight = 1.0;
    Preference pref;
    /// Spread of initial inventories around E0: 0 means a point mass, otherwise Gaussian.
    double init_stdev = 0.0;
};

/// Finite mixture of agent types; weights sum to one.
struct PopulationSpec {
    std::vector<PopulationType> types;

    static PopulationSpec single(const Preference& pref, double init_stdev = 0.0) {
        return PopulationSpec{{PopulationType{1.0, pref, init_stdev}}};
    }

    std::size_t size() const noexcept { return types.size(); }
    /// Weighted mean of the initial inventories.
    double mean_initial_inventory() const noexcept;
    /// True when every type shares the same (phi, A).
    bool identical_preferences() const noexcept;
};

/// Uniform grid t_i = i*T/N, i = 0..N.
class TimeGrid {
public:
    TimeGrid(double horizon, std::size_t steps);

    double horizon() const noexcept { return horizon_; }
    std::size_t steps() const noexcept { return steps_; }
    std::size_t size() const noexcept { return steps_ + 1; }
    double dt() const noexcept { return horizon_ / static_cast<double>(steps_); }
    double node(std::size_t i) const noexcept {
        return static_cast<double>(i) * horizon_ / static_cast<double>(steps_);
    }
    std::vector<double> nodes() const;

private:
    double horizon_;
    std::size_t steps_;
};

/// Whether a type may be used by the heterogeneous solvers (A == sqrt(phi*kappa)).
struct HeteroEligibility {
    std::size_t type_index = 0;
    double required_A = 0.0;
    double actual_A = 0.0;
    bool eligible = false;
};

struct ValidationReport {
    std::vector<std::string> violations;
    std::vector<HeteroEligibility> hetero;

    bool ok() const noexcept { return violations.empty(); }
    bool hetero_eligible() const noexcept;
    /// Human readable multi-line summary.
    std::string describe() const;
};

/// Relative tolerance used when checking A == sqrt(phi*kappa).
inline constexpr double kMatchedPenaltyTolerance = 1e-9;

/// Checks all invariants; never throws. The hetero constraint is reported, not enforced.
ValidationReport validate_scenario(const MarketParams& market, const PopulationSpec& pop);

/// Throws ScenarioError listing every violation.
void require_valid(const MarketParams& market, const PopulationSpec& pop);

/// Throws ScenarioError naming the first type with A != sqrt(phi*kappa).
void require_hetero_eligible(const MarketParams& market, const PopulationSpec& pop);

/// Piecewise-linear interpolation of node samples; exact at nodes.
double linear_interp(const TimeGrid& grid, std::span<const double> samples, double t);

/// Maps t into [0, T], absorbing rounding slop of a few ulps; throws std::out_of_range otherwise.
double checked_time(double t, double horizon);

}  // namespace crowdtrade
