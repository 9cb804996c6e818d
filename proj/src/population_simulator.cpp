#include "crowdtrade/population_simulator.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>

#include "crowdtrade/counter_rng.hpp"
#include "crowdtrade/errors.hpp"
#include "crowdtrade/parallel.hpp"

namespace crowdtrade {

namespace {

Preference aggregate_preference(const PopulationSpec& pop) {
    if (pop.types.empty()) throw ScenarioError("population has no types");
    if (!pop.identical_preferences())
        throw ScenarioError("closed-form equilibrium needs identical (phi, A) across types");
    Preference pref = pop.types.front().pref;
    pref.E0 = pop.mean_initial_inventory();
    return pref;
}

double pairwise_sum(std::span<const double> values) {
    if (values.size() <= 16) {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

double quantile_sorted(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) return std::nan("");
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

struct MeanAndError {
    double mean = 0.0;
    double stderr_ = 0.0;
};

MeanAndError mean_and_error(const std::vector<double>& xs) {
    MeanAndError out;
    if (xs.empty()) return out;
    const double n = static_cast<double>(xs.size());
    out.mean = pairwise_sum(xs) / n;
    if (xs.size() < 2) return out;
    std::vector<double> sq(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) sq[i] = (xs[i] - out.mean) * (xs[i] - out.mean);
    out.stderr_ = std::sqrt(pairwise_sum(sq) / (n - 1.0) / n);
    return out;
}

struct Agent {
    std::size_t type = 0;
    bool deviating = false;
};

}  // namespace

HomogeneousEquilibrium::HomogeneousEquilibrium(const MarketParams& market,
                                               const PopulationSpec& pop, std::size_t grid_steps)
    : pop_(pop), sol_(market, aggregate_preference(pop), grid_steps) {}

HeteroEquilibrium::HeteroEquilibrium(const MarketParams& market, const PopulationSpec& pop,
                                     EquilibriumFlow flow)
    : market_(market), pop_(pop), flow_(std::move(flow)) {
    types_.reserve(pop_.size());
    for (std::size_t k = 0; k < pop_.size(); ++k)
        types_.push_back(recover_type_solution(market_, pop_, k, flow_));
}

double HeteroEquilibrium::h1(std::size_t k, double t) const {
    return linear_interp(flow_.grid, types_.at(k).h1, t);
}

double HeteroEquilibrium::h2(std::size_t k, double) const {
    return 2.0 * pop_.types.at(k).pref.A;
}

double HeteroEquilibrium::type_mean(std::size_t k, double t) const {
    return linear_interp(flow_.grid, types_.at(k).E, t);
}

double population_mean_speed(const TradingEquilibrium& eq, double t) {
    const auto& pop = eq.population();
    double total = 0.0;
    for (std::size_t k = 0; k < pop.size(); ++k)
        total += pop.types[k].weight * eq.speed(k, t, eq.type_mean(k, t));
    return total;
}

void SimConfig::validate() const {
    if (paths == 0) throw ScenarioError("simulation needs at least one path");
    if (steps == 0) throw ScenarioError("simulation needs at least one time step");
    if (!representative && agents_per_type == 0)
        throw ScenarioError("agents_per_type must be positive");
    if (summary_points < 2) throw ScenarioError("summary_points must be at least 2");
    if (!std::isfinite(S0)) throw ScenarioError("S0 must be finite");
    if (perturbation.kind != Perturbation::Kind::none && !std::isfinite(perturbation.value))
        throw ScenarioError("perturbation value must be finite");
}

PathEnsemble simulate(const TradingEquilibrium& eq, const SimConfig& config) {
    config.validate();
    const MarketParams& market = eq.market();
    const PopulationSpec& pop = eq.population();
    const std::size_t K = pop.size();
    if (config.perturbation.kind != Perturbation::Kind::none && config.perturbation.type >= K)
        throw ScenarioError("perturbed type index " + std::to_string(config.perturbation.type) +
                            " out of range");

    const std::size_t N = config.steps;
    const double T = market.T;
    const double dt = T / static_cast<double>(N);
    const double kappa = market.kappa;
    const double sqrt_dt = std::sqrt(dt);

    // Feedback coefficients on the half-step grid t_j = j dt / 2.
    std::vector<std::vector<double>> h1_tab(K), h2_tab(K);
    for (std::size_t k = 0; k < K; ++k) {
        h1_tab[k].resize(2 * N + 1);
        h2_tab[k].resize(2 * N + 1);
        for (std::size_t j = 0; j <= 2 * N; ++j) {
            const double t = j == 2 * N ? T : static_cast<double>(j) * 0.5 * dt;
            h1_tab[k][j] = eq.h1(k, t);
            h2_tab[k][j] = eq.h2(k, t);
        }
    }
    std::vector<double> mu_tab(N + 1);
    for (std::size_t i = 0; i <= N; ++i) mu_tab[i] = eq.flow(i == N ? T : static_cast<double>(i) * dt);

    std::vector<Agent> agents;
    const std::size_t per_type = config.representative ? 1 : config.agents_per_type;
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t m = 0; m < per_type; ++m) agents.push_back({k, false});
    const bool deviation = config.perturbation.kind != Perturbation::Kind::none;
    std::size_t reference_agent = 0;
    if (deviation) {
        reference_agent = config.perturbation.type * per_type;
        agents.push_back({config.perturbation.type, true});
    }
    const std::size_t A_count = agents.size();

    std::vector<std::size_t> summary_steps(config.summary_points);
    for (std::size_t j = 0; j < config.summary_points; ++j)
        summary_steps[j] = static_cast<std::size_t>(std::llround(
            static_cast<double>(j) * static_cast<double>(N) /
            static_cast<double>(config.summary_points - 1)));
    const std::size_t Ns = summary_steps.size();

    const std::size_t P = config.paths;
    std::vector<double> objectives(P * A_count);
    std::vector<double> q_summary(P * A_count * Ns);
    std::vector<double> s_summary(P * Ns);
    std::vector<PathRecord> records(config.keep_paths ? P : 0);

    parallel_for(P, [&](std::size_t p) {
        CounterStream stream(config.seed, p);
        std::vector<double> Q(A_count), X(A_count, 0.0), R(A_count, 0.0), nu(A_count);
        for (std::size_t a = 0; a < A_count; ++a) {
            const auto& type = pop.types[agents[a].type];
            if (agents[a].deviating) {
                Q[a] = Q[reference_agent];
            } else if (config.representative || type.init_stdev == 0.0) {
                Q[a] = type.pref.E0;
            } else {
                Q[a] = type.pref.E0 + type.init_stdev * stream.normal();
            }
        }
        auto feedback = [&](std::size_t a, std::size_t j, double q) {
            const std::size_t k = agents[a].type;
            const double v = (h1_tab[k][j] - q * h2_tab[k][j]) / (2.0 * kappa);
            return agents[a].deviating ? config.perturbation.apply(v) : v;
        };
        for (std::size_t a = 0; a < A_count; ++a) nu[a] = feedback(a, 0, Q[a]);

        PathRecord* rec = config.keep_paths ? &records[p] : nullptr;
        if (rec) {
            rec->S.assign(N + 1, 0.0);
            rec->Q.assign(A_count, std::vector<double>(N + 1, 0.0));
            rec->X.assign(A_count, std::vector<double>(N + 1, 0.0));
            rec->S[0] = config.S0;
            for (std::size_t a = 0; a < A_count; ++a) rec->Q[a][0] = Q[a];
        }

        double S = config.S0;
        std::size_t next_summary = 0;
        auto record_summary = [&](std::size_t i) {
            while (next_summary < Ns && summary_steps[next_summary] == i) {
                s_summary[p * Ns + next_summary] = S;
                for (std::size_t a = 0; a < A_count; ++a)
                    q_summary[(p * A_count + a) * Ns + next_summary] = Q[a];
                ++next_summary;
            }
        };
        record_summary(0);

        for (std::size_t i = 0; i < N; ++i) {
            const double z = stream.normal();
            const double S_next =
                S + market.alpha * 0.5 * (mu_tab[i] + mu_tab[i + 1]) * dt + market.sigma * sqrt_dt * z;
            for (std::size_t a = 0; a < A_count; ++a) {
                const double q = Q[a];
                const double k1 = nu[a];
                const double k2 = feedback(a, 2 * i + 1, q + 0.5 * dt * k1);
                const double k3 = feedback(a, 2 * i + 1, q + 0.5 * dt * k2);
                const double k4 = feedback(a, 2 * i + 2, q + dt * k3);
                const double q_next = q + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                const double nu_next = feedback(a, 2 * i + 2, q_next);
                X[a] -= 0.5 * dt * (k1 * (S + kappa * k1) + nu_next * (S_next + kappa * nu_next));
                const double phi = pop.types[agents[a].type].pref.phi;
                R[a] += 0.5 * dt * phi * (q * q + q_next * q_next);
                Q[a] = q_next;
                nu[a] = nu_next;
            }
            S = S_next;
            if (rec) {
                rec->S[i + 1] = S;
                for (std::size_t a = 0; a < A_count; ++a) {
                    rec->Q[a][i + 1] = Q[a];
                    rec->X[a][i + 1] = X[a];
                }
            }
            record_summary(i + 1);
        }

        for (std::size_t a = 0; a < A_count; ++a) {
            const double A_pen = pop.types[agents[a].type].pref.A;
            const double J = X[a] + Q[a] * (S - A_pen * Q[a]) - R[a];
            if (!std::isfinite(J))
                throw NumericalError("non-finite objective on path " + std::to_string(p));
            objectives[p * A_count + a] = J;
        }
        if (rec) rec->objective.assign(objectives.begin() + static_cast<std::ptrdiff_t>(p * A_count),
                                       objectives.begin() + static_cast<std::ptrdiff_t>((p + 1) * A_count));
    });

    PathEnsemble out;
    out.agents_per_path = A_count;
    out.summary_times.resize(Ns);
    for (std::size_t j = 0; j < Ns; ++j)
        out.summary_times[j] = static_cast<double>(summary_steps[j]) * dt;
    out.summary_times.back() = T;

    out.mean_price.resize(Ns);
    {
        std::vector<double> column(P);
        for (std::size_t j = 0; j < Ns; ++j) {
            for (std::size_t p = 0; p < P; ++p) column[p] = s_summary[p * Ns + j];
            out.mean_price[j] = pairwise_sum(column) / static_cast<double>(P);
        }
    }

    out.types.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
        std::vector<double> js;
        js.reserve(P * per_type);
        for (std::size_t p = 0; p < P; ++p)
            for (std::size_t a = 0; a < A_count; ++a)
                if (!agents[a].deviating && agents[a].type == k) js.push_back(objectives[p * A_count + a]);
        const auto stats = mean_and_error(js);
        TypeSummary& ts = out.types[k];
        ts.mean_objective = stats.mean;
        ts.stderr_objective = stats.stderr_;
        ts.mean_inventory.resize(Ns);
        ts.q05.resize(Ns);
        ts.q50.resize(Ns);
        ts.q95.resize(Ns);
        std::vector<double> column;
        column.reserve(P * per_type);
        for (std::size_t j = 0; j < Ns; ++j) {
            column.clear();
            for (std::size_t p = 0; p < P; ++p)
                for (std::size_t a = 0; a < A_count; ++a)
                    if (!agents[a].deviating && agents[a].type == k)
                        column.push_back(q_summary[(p * A_count + a) * Ns + j]);
            ts.mean_inventory[j] = pairwise_sum(column) / static_cast<double>(column.size());
            std::sort(column.begin(), column.end());
            ts.q05[j] = quantile_sorted(column, 0.05);
            ts.q50[j] = quantile_sorted(column, 0.50);
            ts.q95[j] = quantile_sorted(column, 0.95);
        }
    }

    if (deviation) {
        out.has_deviation = true;
        std::vector<double> dev(P), diff(P);
        for (std::size_t p = 0; p < P; ++p) {
            dev[p] = objectives[p * A_count + A_count - 1];
            diff[p] = dev[p] - objectives[p * A_count + reference_agent];
        }
        out.mean_objective_deviating = pairwise_sum(dev) / static_cast<double>(P);
        const auto stats = mean_and_error(diff);
        out.mean_difference = stats.mean;
        out.stderr_difference = stats.stderr_;
    }

    out.objectives = std::move(objectives);
    out.paths = std::move(records);
    return out;
}

double objective_from_record(const PathRecord& record, std::size_t agent, double A, double phi,
                             double T) {
    const auto& Q = record.Q.at(agent);
    const auto& X = record.X.at(agent);
    const std::size_t N = Q.size() - 1;
    if (N == 0 || record.S.size() != Q.size() || X.size() != Q.size())
        throw std::invalid_argument("inconsistent path record");
    const double dt = T / static_cast<double>(N);
    double running = 0.0;
    for (std::size_t i = 0; i < N; ++i) running += 0.5 * dt * (Q[i] * Q[i] + Q[i + 1] * Q[i + 1]);
    return X[N] + Q[N] * (record.S[N] - A * Q[N]) - phi * running;
}

DeviationReport deviation_test(const TradingEquilibrium& eq, SimConfig config,
                               const Perturbation& perturbation) {
    if (perturbation.kind == Perturbation::Kind::none)
        throw ScenarioError("deviation test needs a perturbation");
    config.perturbation = perturbation;
    const PathEnsemble ens = simulate(eq, config);
    DeviationReport report;
    report.perturbation = perturbation;
    report.mean_optimal = ens.mean_objective_deviating - ens.mean_difference;
    report.mean_deviating = ens.mean_objective_deviating;
    report.mean_difference = ens.mean_difference;
    report.stderr_difference = ens.stderr_difference;
    report.deviation_worse = ens.stderr_difference > 0.0
                                 ? ens.mean_difference < -3.0 * ens.stderr_difference
                                 : ens.mean_difference < 0.0;
    return report;
}

}  // namespace crowdtrade
