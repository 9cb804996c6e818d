#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crowdtrade/core_model.hpp"

namespace crowdtrade {

/// Uniform (t, q) grid: time_steps + 1 time nodes on [0, T], q_intervals + 1 inventory nodes.
struct PdeGrid {
    double T = 1.0;
    std::size_t time_steps = 2000;
    double q_min = -1.0;
    double q_max = 1.0;
    std::size_t q_intervals = 400;

    double dt() const noexcept { return T / static_cast<double>(time_steps); }
    double dq() const noexcept { return (q_max - q_min) / static_cast<double>(q_intervals); }
    double t(std::size_t n) const noexcept {
        return static_cast<double>(n) * T / static_cast<double>(time_steps);
    }
    double q(std::size_t i) const noexcept {
        return q_min + static_cast<double>(i) * (q_max - q_min) / static_cast<double>(q_intervals);
    }
    std::size_t time_nodes() const noexcept { return time_steps + 1; }
    std::size_t q_nodes() const noexcept { return q_intervals + 1; }

    void validate() const;
};

/**
 * Default inventory window. With q_scale = max_k(|E0_k| + 6 sd_k) the window
 * is [-0.5, 1.5] * q_scale when all E0_k >= 0 (not all zero), its mirror when
 * all E0_k <= 0, and [-1.5, 1.5] * q_scale otherwise.
 */
PdeGrid default_pde_grid(const MarketParams& market, const PopulationSpec& pop,
                         std::size_t time_steps = 2000, std::size_t q_intervals = 400);

/// Row-major (time, inventory) field.
struct Field {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Field() = default;
    Field(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t n, std::size_t i) { return data[n * cols + i]; }
    double operator()(std::size_t n, std::size_t i) const { return data[n * cols + i]; }
    std::span<const double> row(std::size_t n) const { return {data.data() + n * cols, cols}; }
    std::span<double> row(std::size_t n) { return {data.data() + n * cols, cols}; }
};

/**
 * Discretization of int (d_q v / 2 kappa) m dq on the inventory faces.
 * `upwind` takes the density from the upwind cell, so the flow equals the
 * exact time derivative of the first moment under the transport scheme;
 * `midpoint` averages the two neighbouring cells (trapezoid in q).
 */
enum class FlowQuadrature { upwind, midpoint };

struct PdeOptions {
    /// Courant number: dt * max|d_q v| / (2 kappa dq) <= cfl.
    double cfl = 0.5;
    /// Sub-step adaptively between output nodes; otherwise a CFL violation is an error.
    bool adaptive = true;
    std::size_t max_substeps = 50'000'000;
    /// Mass that would have left through the q boundaries before the solver gives up.
    double leak_limit = 1e-4;

    double tol = 1e-8;
    std::size_t max_iter = 500;
    double damping = 0.5;
    /// Starting flow; defaults to the closed-form flow for identical preferences, else 0.
    std::optional<std::vector<double>> initial_flow;
    FlowQuadrature flow_quadrature = FlowQuadrature::upwind;
    /// Re-solve from a second starting flow and warn when the limits disagree.
    bool check_uniqueness = false;
};

struct HjbResult {
    Field v;
    double max_gradient = 0.0;
    std::size_t substeps = 0;
};

struct TransportResult {
    Field m;
    std::vector<double> first_moment;
    double max_mass_error = 0.0;
    double leaked_mass = 0.0;
    std::size_t substeps = 0;
};

/**
 * Backward sweep for  -alpha q mu = d_t v - phi q^2 + (d_q v)^2 / (4 kappa),
 * v(T, q) = -A q^2, with a local Lax-Friedrichs Hamiltonian. `mu` is sampled
 * on the time nodes and interpolated linearly inside sub-steps.
 */
HjbResult solve_hjb_backward(const MarketParams& market, const Preference& pref,
                             const PdeGrid& grid, std::span<const double> mu,
                             const PdeOptions& options = {});

/**
 * Forward sweep for  d_t m + d_q(m d_q v / (2 kappa)) = 0  with first-order
 * upwind fluxes on cells centred at the q nodes and no-flux outer faces.
 * Throws NumericalError when the monitored boundary outflow exceeds
 * options.leak_limit.
 */
TransportResult solve_transport_forward(const MarketParams& market, const PdeGrid& grid,
                                        const Field& v, std::span<const double> m0,
                                        const PdeOptions& options = {});

/// Unit-mass density on the q nodes: Gaussian, or a mean-preserving two-node split when sd = 0.
std::vector<double> initial_density(const PdeGrid& grid, double mean, double stdev);

/// Aggregate flow contribution of one type: int (d_q v / 2 kappa) m dq at every time node.
std::vector<double> type_flow(const MarketParams& market, const PdeGrid& grid, const Field& v,
                              const Field& m,
                              FlowQuadrature quadrature = FlowQuadrature::upwind);

struct PdeState {
    PdeGrid grid;
    std::vector<Field> v;  ///< per type
    std::vector<Field> m;  ///< per type, unit mass
    std::vector<double> mu;
    std::vector<std::vector<double>> type_moments;
    std::vector<double> mean_inventory;  ///< weighted first moment
    std::size_t iterations = 0;
    /// sup |mu - T(mu)| at termination.
    double residual = 0.0;
    std::vector<double> residual_history;
    double max_mass_error = 0.0;
    double leaked_mass = 0.0;
    std::vector<std::string> warnings;
};

/// Damped fixed point mu <- (1 - lambda) mu + lambda T(mu). Throws ConvergenceError.
PdeState solve_mfg_fixed_point(const MarketParams& market, const PopulationSpec& pop,
                               const PdeGrid& grid, const PdeOptions& options = {});

/**
 * Binary field dump: 8-byte magic "CTFIELD1", uint64 rows, uint64 cols, then
 * rows * cols IEEE-754 doubles, row-major (time-major), little-endian.
 */
void write_field(std::ostream& out, const Field& field);
Field read_field(std::istream& in);

}  // namespace crowdtrade
