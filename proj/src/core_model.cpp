#include "crowdtrade/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "crowdtrade/errors.hpp"

namespace crowdtrade {

double PopulationSpec::mean_initial_inventory() const noexcept {
    double mean = 0.0;
    for (const auto& type : types) mean += type.weight * type.pref.E0;
    return mean;
}

bool PopulationSpec::identical_preferences() const noexcept {
    return std::all_of(types.begin(), types.end(), [&](const PopulationType& t) {
        return t.pref.phi == types.front().pref.phi && t.pref.A == types.front().pref.A;
    });
}

TimeGrid::TimeGrid(double horizon, std::size_t steps) : horizon_(horizon), steps_(steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
        throw ScenarioError("time grid horizon must be finite and strictly positive");
    }
    if (steps < 2) throw ScenarioError("time grid needs at least 2 steps");
}

std::vector<double> TimeGrid::nodes() const {
    std::vector<double> out(size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = node(i);
    return out;
}

bool ValidationReport::hetero_eligible() const noexcept {
    return std::all_of(hetero.begin(), hetero.end(),
                       [](const HeteroEligibility& e) { return e.eligible; });
}

std::string ValidationReport::describe() const {
    std::ostringstream out;
    out.precision(17);
    if (violations.empty()) out << "scenario valid\n";
    for (const auto& v : violations) out << "violation: " << v << '\n';
    for (const auto& e : hetero) {
        out << "type " << e.type_index << ": A = " << e.actual_A << ", sqrt(kappa*phi) = "
            << e.required_A << (e.eligible ? " (hetero-eligible)" : " (hetero-ineligible)")
            << '\n';
    }
    return out.str();
}

ValidationReport validate_scenario(const MarketParams& market, const PopulationSpec& pop) {
    ValidationReport report;
    auto& v = report.violations;
    const auto finite = [](double x) { return std::isfinite(x); };

    if (!finite(market.alpha)) v.emplace_back("alpha must be finite");
    if (!finite(market.kappa)) {
        v.emplace_back("kappa must be finite");
    } else if (!(market.kappa > 0.0)) {
        v.emplace_back("kappa must be strictly positive");
    }
    if (!finite(market.sigma)) {
        v.emplace_back("sigma must be finite");
    } else if (market.sigma < 0.0) {
        v.emplace_back("sigma must be nonnegative");
    }
    if (!finite(market.T)) {
        v.emplace_back("T must be finite");
    } else if (!(market.T > 0.0)) {
        v.emplace_back("T must be strictly positive");
    }

    if (pop.types.empty()) v.emplace_back("population needs at least one type");

    double weight_sum = 0.0;
    for (std::size_t k = 0; k < pop.types.size(); ++k) {
        const auto& type = pop.types[k];
        const std::string tag = "type " + std::to_string(k) + ": ";
        if (!finite(type.weight) || !(type.weight > 0.0)) {
            v.push_back(tag + "weight must be strictly positive");
        }
        weight_sum += type.weight;
        const auto& p = type.pref;
        if (!finite(p.phi) || p.phi < 0.0) v.push_back(tag + "phi must be finite and >= 0");
        if (!finite(p.A) || p.A < 0.0) v.push_back(tag + "A must be finite and >= 0");
        if (!finite(p.E0)) v.push_back(tag + "E0 must be finite");
        if (!finite(type.init_stdev) || type.init_stdev < 0.0) {
            v.push_back(tag + "initial inventory stdev must be finite and >= 0");
        }

        HeteroEligibility e;
        e.type_index = k;
        e.actual_A = p.A;
        e.required_A = (market.kappa > 0.0 && p.phi >= 0.0) ? std::sqrt(p.phi * market.kappa)
                                                             : std::nan("");
        e.eligible = std::isfinite(e.required_A) &&
                     std::abs(p.A - e.required_A) <=
                         kMatchedPenaltyTolerance * std::max(1.0, e.required_A);
        report.hetero.push_back(e);
    }
    if (!pop.types.empty() && std::abs(weight_sum - 1.0) > 1e-12) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "type weights must sum to 1 (got " << weight_sum << ")";
        v.push_back(msg.str());
    }
    return report;
}

void require_valid(const MarketParams& market, const PopulationSpec& pop) {
    const auto report = validate_scenario(market, pop);
    if (report.ok()) return;
    std::string msg = "invalid scenario:";
    for (const auto& violation : report.violations) msg += "\n  " + violation;
    throw ScenarioError(msg);
}

void require_hetero_eligible(const MarketParams& market, const PopulationSpec& pop) {
    require_valid(market, pop);
    for (const auto& e : validate_scenario(market, pop).hetero) {
        if (!e.eligible) {
            std::ostringstream msg;
            msg.precision(17);
            msg << "type " << e.type_index << " has A = " << e.actual_A
                << " but the heterogeneous solvers require A = sqrt(phi*kappa) = "
                << e.required_A;
            throw ScenarioError(msg.str());
        }
    }
}

double checked_time(double t, double horizon) {
    const double slop = 64.0 * std::numeric_limits<double>::epsilon() * horizon;
    if (!(t >= -slop && t <= horizon + slop)) {
        throw std::out_of_range("time " + std::to_string(t) + " outside [0, " +
                                std::to_string(horizon) + "]");
    }
    return std::clamp(t, 0.0, horizon);
}

double linear_interp(const TimeGrid& grid, std::span<const double> samples, double t) {
    if (samples.size() != grid.size()) {
        throw std::invalid_argument("sample count does not match the time grid");
    }
    t = checked_time(t, grid.horizon());
    const double x = t / grid.dt();
    const auto nearest = static_cast<std::size_t>(std::llround(x));
    if (nearest <= grid.steps() && grid.node(nearest) == t) return samples[nearest];
    auto i = static_cast<std::size_t>(std::floor(x));
    if (i >= grid.steps()) return samples[grid.steps()];
    const double frac = x - static_cast<double>(i);
    if (frac == 0.0) return samples[i];
    return samples[i] + frac * (samples[i + 1] - samples[i]);
}

}  // namespace crowdtrade
