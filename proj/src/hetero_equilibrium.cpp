#include "crowdtrade/hetero_equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "crowdtrade/errors.hpp"
#include "crowdtrade/parallel.hpp"

namespace crowdtrade {

namespace {

// Reciprocal condition numbers below this are treated as singular.
constexpr double kMinReciprocalCondition = 1e-12;

double sup_distance(std::span<const double> a, std::span<const double> b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

struct ResponseParts {
    std::vector<double> forward;     // int_t^T e^{th(t-s)} mu(s) ds
    std::vector<double> cumulative;  // int_0^t e^{th(tau-t)} forward(tau) dtau
};

ResponseParts response_parts(double theta, const TimeGrid& grid, std::span<const double> mu) {
    const std::size_t n = grid.steps();
    const double h = grid.dt();
    const double decay = std::exp(-theta * h);
    ResponseParts parts{std::vector<double>(n + 1, 0.0), std::vector<double>(n + 1, 0.0)};
    auto& G = parts.forward;
    auto& I = parts.cumulative;
    for (std::size_t i = n; i-- > 0;) {
        G[i] = decay * G[i + 1] + 0.5 * h * (mu[i] + decay * mu[i + 1]);
    }
    for (std::size_t i = 1; i <= n; ++i) {
        I[i] = decay * I[i - 1] + 0.5 * h * (decay * G[i - 1] + G[i]);
    }
    return parts;
}

}  // namespace

const char* to_string(FlowMethod method) noexcept {
    return method == FlowMethod::picard ? "picard" : "direct";
}

std::vector<double> type_flow_response(double theta, double kappa, const TimeGrid& grid,
                                       std::span<const double> mu) {
    if (mu.size() != grid.size()) throw std::invalid_argument("flow size does not match grid");
    const auto parts = response_parts(theta, grid, mu);
    std::vector<double> out(grid.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = (parts.forward[i] - theta * parts.cumulative[i]) / (2.0 * kappa);
    }
    return out;
}

FlowOperator::FlowOperator(const MarketParams& market, const PopulationSpec& pop,
                           const TimeGrid& grid)
    : market_(market), pop_(pop), grid_(grid) {
    require_hetero_eligible(market, pop);
    if (std::abs(grid.horizon() - market.T) > 1e-12 * market.T) {
        throw ScenarioError("time grid horizon differs from the market horizon");
    }
    const std::size_t size = grid.size();
    for (const auto& type : pop.types) thetas_.push_back(type.pref.A / market.kappa);

    offset_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size));
    for (std::size_t k = 0; k < pop.size(); ++k) {
        const double th = thetas_[k];
        const auto& type = pop.types[k];
        for (std::size_t i = 0; i < size; ++i) {
            offset_[static_cast<Eigen::Index>(i)] -=
                type.weight * th * std::exp(-th * grid.node(i)) * type.pref.E0;
        }
    }

    // Column j of K is the aggregate response to a unit impulse at node j.
    kernel_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(size),
                                    static_cast<Eigen::Index>(size));
    parallel_for(size, [&](std::size_t j) {
        std::vector<double> impulse(size, 0.0);
        impulse[j] = 1.0;
        for (std::size_t k = 0; k < pop.size(); ++k) {
            const auto column = type_flow_response(thetas_[k], market.kappa, grid, impulse);
            for (std::size_t i = 0; i < size; ++i) {
                kernel_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) +=
                    pop.types[k].weight * column[i];
            }
        }
    });
}

std::vector<double> FlowOperator::apply(std::span<const double> mu) const {
    if (mu.size() != grid_.size()) throw std::invalid_argument("flow size does not match grid");
    const Eigen::Map<const Eigen::VectorXd> in(mu.data(), static_cast<Eigen::Index>(mu.size()));
    const Eigen::VectorXd out = offset_ + market_.alpha * (kernel_ * in);
    return {out.data(), out.data() + out.size()};
}

double FlowOperator::contraction_factor() const {
    return std::abs(market_.alpha) * kernel_.cwiseAbs().rowwise().sum().maxCoeff();
}

std::vector<double> apply_phi_alpha(const MarketParams& market, const PopulationSpec& pop,
                                    const TimeGrid& grid, std::span<const double> mu_in) {
    return FlowOperator(market, pop, grid).apply(mu_in);
}

EquilibriumFlow solve_picard(const FlowOperator& op, const PicardOptions& options) {
    if (!(options.tol > 0.0)) throw ScenarioError("Picard tolerance must be positive");
    if (!(options.damping > 0.0 && options.damping <= 1.0)) {
        throw ScenarioError("Picard damping must lie in (0, 1]");
    }
    if (options.max_iter == 0) throw ScenarioError("Picard max_iter must be positive");

    const double lambda = options.damping;
    EquilibriumFlow flow{op.grid(), std::vector<double>(op.grid().size(), 0.0),
                         FlowMethod::picard};
    auto image = op.apply(flow.mu);
    for (std::size_t it = 1; it <= options.max_iter; ++it) {
        for (std::size_t i = 0; i < image.size(); ++i)
            flow.mu[i] = (1.0 - lambda) * flow.mu[i] + lambda * image[i];
        image = op.apply(flow.mu);
        const double residual = sup_distance(flow.mu, image);
        flow.residual_history.push_back(residual);
        flow.iterations = it;
        flow.residual = residual;
        if (!std::isfinite(residual)) {
            throw ConvergenceError("Picard iteration diverged (non-finite residual); |alpha| is "
                                   "likely outside the contraction regime",
                                   flow.residual_history);
        }
        if (residual <= options.tol) return flow;
    }
    std::ostringstream msg;
    msg.precision(6);
    msg << "Picard iteration did not converge in " << options.max_iter
        << " iterations (residual " << flow.residual
        << "); |alpha| may be beyond the contraction regime (factor " << op.contraction_factor()
        << ")";
    throw ConvergenceError(msg.str(), flow.residual_history);
}

EquilibriumFlow solve_picard(const MarketParams& market, const PopulationSpec& pop,
                             const TimeGrid& grid, const PicardOptions& options) {
    return solve_picard(FlowOperator(market, pop, grid), options);
}

EquilibriumFlow solve_direct(const FlowOperator& op) {
    const auto size = static_cast<Eigen::Index>(op.grid().size());
    const Eigen::MatrixXd system =
        Eigen::MatrixXd::Identity(size, size) - op.market().alpha * op.kernel();
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
    const double rcond = lu.rcond();
    if (!(rcond >= kMinReciprocalCondition)) {
        std::ostringstream msg;
        msg << "direct solve: (I - alpha K) is singular or ill-conditioned (rcond " << rcond
            << "); |alpha| is outside the well-posed regime";
        throw NumericalError(msg.str());
    }
    const Eigen::VectorXd mu = lu.solve(op.offset());
    EquilibriumFlow flow{op.grid(), std::vector<double>(mu.data(), mu.data() + mu.size()),
                         FlowMethod::direct, 1};
    flow.residual = sup_distance(flow.mu, op.apply(flow.mu));
    flow.residual_history = {flow.residual};
    return flow;
}

EquilibriumFlow solve_direct(const MarketParams& market, const PopulationSpec& pop,
                             const TimeGrid& grid) {
    return solve_direct(FlowOperator(market, pop, grid));
}

TypeSolution recover_type_solution(const MarketParams& market, const PopulationSpec& pop,
                                   std::size_t k, const EquilibriumFlow& flow) {
    if (k >= pop.size()) throw std::out_of_range("type index out of range");
    require_hetero_eligible(market, pop);
    const auto& grid = flow.grid;
    const auto& pref = pop.types[k].pref;
    TypeSolution sol;
    sol.type_index = k;
    sol.theta = pref.A / market.kappa;
    const auto parts = response_parts(sol.theta, grid, flow.mu);
    sol.h1.resize(grid.size());
    sol.E.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        sol.h1[i] = market.alpha * parts.forward[i];
        sol.E[i] = std::exp(-sol.theta * grid.node(i)) * pref.E0 +
                   market.alpha * parts.cumulative[i] / (2.0 * market.kappa);
    }
    return sol;
}

double estimate_contraction(const MarketParams& market, const PopulationSpec& pop,
                            const TimeGrid& grid) {
    return FlowOperator(market, pop, grid).contraction_factor();
}

}  // namespace crowdtrade
