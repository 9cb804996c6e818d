#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "crowdtrade/core_model.hpp"

namespace crowdtrade {

enum class FlowMethod { picard, direct };

const char* to_string(FlowMethod method) noexcept;

/// Equilibrium net trading flow sampled on the nodes of a time grid.
struct EquilibriumFlow {
    TimeGrid grid;
    std::vector<double> mu;
    FlowMethod method = FlowMethod::direct;
    std::size_t iterations = 0;
    /// sup |mu - Phi(mu)| at the returned flow.
    double residual = 0.0;
    std::vector<double> residual_history;

    double at(double t) const { return linear_interp(grid, mu, t); }
};

/// Per-type value coefficient h1 and mean inventory E on the flow's grid (h2 = 2 A is constant).
struct TypeSolution {
    std::size_t type_index = 0;
    double theta = 0.0;  ///< A_k / kappa
    std::vector<double> h1;
    std::vector<double> E;
};

/**
 * Linear response of one type's aggregate trading speed to an anticipated
 * flow, without the alpha factor or the type weight:
 *
 *   (1/2k) int_t^T e^{th(t-s)} mu(s) ds
 *     - (th/2k) int_0^t e^{th(tau-t)} int_tau^T e^{th(tau-s)} mu(s) ds dtau.
 *
 * Both integrals use the composite trapezoid rule on the grid nodes,
 * evaluated with O(N) recursions.
 */
std::vector<double> type_flow_response(double theta, double kappa, const TimeGrid& grid,
                                       std::span<const double> mu);

/**
 * The best-response aggregation map mu -> b + alpha K mu for a population
 * whose types all satisfy A_k = sqrt(phi_k kappa). K is assembled once as a
 * dense (N+1) x (N+1) matrix.
 */
class FlowOperator {
public:
    FlowOperator(const MarketParams& market, const PopulationSpec& pop, const TimeGrid& grid);

    const MarketParams& market() const noexcept { return market_; }
    const PopulationSpec& population() const noexcept { return pop_; }
    const TimeGrid& grid() const noexcept { return grid_; }
    const std::vector<double>& thetas() const noexcept { return thetas_; }

    /// Flow produced when nobody anticipates any flow: -sum_k w_k th_k e^{-th_k t} E0_k.
    const Eigen::VectorXd& offset() const noexcept { return offset_; }
    const Eigen::MatrixXd& kernel() const noexcept { return kernel_; }

    std::vector<double> apply(std::span<const double> mu) const;

    /// |alpha| * max absolute row sum of K.
    double contraction_factor() const;

private:
    MarketParams market_;
    PopulationSpec pop_;
    TimeGrid grid_;
    std::vector<double> thetas_;
    Eigen::VectorXd offset_;
    Eigen::MatrixXd kernel_;
};

struct PicardOptions {
    double tol = 1e-10;
    std::size_t max_iter = 10000;
    double damping = 1.0;
};

std::vector<double> apply_phi_alpha(const MarketParams& market, const PopulationSpec& pop,
                                    const TimeGrid& grid, std::span<const double> mu_in);

/// mu <- (1 - damping) mu + damping Phi(mu) from mu = 0 until sup |mu - Phi(mu)| <= tol.
/// Throws ConvergenceError.
EquilibriumFlow solve_picard(const FlowOperator& op, const PicardOptions& options = {});
EquilibriumFlow solve_picard(const MarketParams& market, const PopulationSpec& pop,
                             const TimeGrid& grid, const PicardOptions& options = {});

/// Dense LU solve of (I - alpha K) mu = b. Throws NumericalError when ill-conditioned.
EquilibriumFlow solve_direct(const FlowOperator& op);
EquilibriumFlow solve_direct(const MarketParams& market, const PopulationSpec& pop,
                             const TimeGrid& grid);

TypeSolution recover_type_solution(const MarketParams& market, const PopulationSpec& pop,
                                   std::size_t k, const EquilibriumFlow& flow);

double estimate_contraction(const MarketParams& market, const PopulationSpec& pop,
                            const TimeGrid& grid);

}  // namespace crowdtrade
