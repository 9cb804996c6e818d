#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "crowdtrade/closed_form.hpp"
#include "crowdtrade/core_model.hpp"
#include "crowdtrade/hetero_equilibrium.hpp"

namespace crowdtrade {

/**
 * Equilibrium seen by a simulated agent: the net flow mu(t) and, per type,
 * the affine feedback nu_k(t, q) = (h1_k(t) - q h2_k(t)) / (2 kappa).
 */
class TradingEquilibrium {
public:
    virtual ~TradingEquilibrium() = default;

    virtual const MarketParams& market() const = 0;
    virtual const PopulationSpec& population() const = 0;
    virtual double h1(std::size_t k, double t) const = 0;
    virtual double h2(std::size_t k, double t) const = 0;
    virtual double flow(double t) const = 0;
    /// Mean inventory of type k at time t.
    virtual double type_mean(std::size_t k, double t) const = 0;

    double speed(std::size_t k, double t, double q) const {
        return (h1(k, t) - q * h2(k, t)) / (2.0 * market().kappa);
    }
};

/// Closed-form equilibrium for a population with identical (phi, A).
class HomogeneousEquilibrium final : public TradingEquilibrium {
public:
    HomogeneousEquilibrium(const MarketParams& market, const PopulationSpec& pop,
                           std::size_t grid_steps = 1000);

    const HomogeneousSolution& solution() const noexcept { return sol_; }

    const MarketParams& market() const override { return sol_.market(); }
    const PopulationSpec& population() const override { return pop_; }
    double h1(std::size_t, double t) const override { return sol_.h1(t); }
    double h2(std::size_t, double t) const override { return sol_.h2(t); }
    double flow(double t) const override { return sol_.mu(t); }
    double type_mean(std::size_t k, double t) const override {
        return sol_.individual_inventory(t, pop_.types.at(k).pref.E0);
    }

private:
    PopulationSpec pop_;
    HomogeneousSolution sol_;
};

/// Heterogeneous equilibrium from a solved flow; grid samples are interpolated linearly.
class HeteroEquilibrium final : public TradingEquilibrium {
public:
    HeteroEquilibrium(const MarketParams& market, const PopulationSpec& pop, EquilibriumFlow flow);

    const EquilibriumFlow& equilibrium_flow() const noexcept { return flow_; }
    const std::vector<TypeSolution>& type_solutions() const noexcept { return types_; }

    const MarketParams& market() const override { return market_; }
    const PopulationSpec& population() const override { return pop_; }
    double h1(std::size_t k, double t) const override;
    double h2(std::size_t k, double t) const override;
    double flow(double t) const override { return flow_.at(t); }
    double type_mean(std::size_t k, double t) const override;

private:
    MarketParams market_;
    PopulationSpec pop_;
    EquilibriumFlow flow_;
    std::vector<TypeSolution> types_;
};

/// Weighted mean trading speed when every type sits at its mean inventory.
double population_mean_speed(const TradingEquilibrium& eq, double t);

/// Deviation applied to one tagged agent: nu -> factor * nu, or nu -> nu + offset.
struct Perturbation {
    enum class Kind { none, factor, offset };
    Kind kind = Kind::none;
    double value = 0.0;
    std::size_t type = 0;

    double apply(double nu) const noexcept {
        switch (kind) {
            case Kind::factor: return value * nu;
            case Kind::offset: return nu + value;
            case Kind::none: break;
        }
        return nu;
    }
};

struct SimConfig {
    std::size_t paths = 10000;
    /// One agent per type starting exactly at E0_k; otherwise `agents_per_type` draws per path.
    bool representative = true;
    std::size_t agents_per_type = 1;
    /// Integration steps on [0, T].
    std::size_t steps = 10000;
    std::uint64_t seed = 0;
    double S0 = 100.0;
    Perturbation perturbation;
    /// Keep full (S, Q, X) trajectories per path.
    bool keep_paths = false;
    std::size_t summary_points = 51;

    void validate() const;
};

struct TypeSummary {
    double mean_objective = 0.0;
    double stderr_objective = 0.0;
    std::vector<double> mean_inventory;  ///< at summary times
    std::vector<double> q05;
    std::vector<double> q50;
    std::vector<double> q95;
};

struct PathRecord {
    std::vector<double> S;
    /// Per agent (types in order, then the deviating agent if any).
    std::vector<std::vector<double>> Q;
    std::vector<std::vector<double>> X;
    std::vector<double> objective;
};

struct PathEnsemble {
    std::vector<double> summary_times;
    std::vector<TypeSummary> types;
    std::vector<double> mean_price;
    /// Agent-level objectives, path-major: objectives[p * agents + a].
    std::vector<double> objectives;
    std::size_t agents_per_path = 0;

    bool has_deviation = false;
    double mean_objective_deviating = 0.0;
    /// Mean and standard error of J(deviating) - J(reference agent of the same type), paired.
    double mean_difference = 0.0;
    double stderr_difference = 0.0;

    std::vector<PathRecord> paths;
};

/**
 * Simulates price, inventories and cash along P paths. Price steps integrate
 * the flow drift exactly (trapezoid) and add sigma sqrt(dt) Z; inventories use
 * RK4 on dQ = nu dt; cash and the running penalty use the trapezoid rule.
 * Normal draws come from counter-based per-path streams.
 */
PathEnsemble simulate(const TradingEquilibrium& eq, const SimConfig& config);

/// Recomputes X_T + Q_T (S_T - A Q_T) - phi int Q^2 from stored trajectories.
double objective_from_record(const PathRecord& record, std::size_t agent, double A, double phi,
                             double T);

struct DeviationReport {
    Perturbation perturbation;
    double mean_optimal = 0.0;
    double mean_deviating = 0.0;
    double mean_difference = 0.0;  ///< deviating - optimal
    double stderr_difference = 0.0;
    /// mean_difference < -3 stderr (or < 0 when the paired difference has no variance).
    bool deviation_worse = false;
};

DeviationReport deviation_test(const TradingEquilibrium& eq, SimConfig config,
                               const Perturbation& perturbation);

}  // namespace crowdtrade
