#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "crowdtrade/core_model.hpp"

namespace crowdtrade {

/**
 * Exact equilibrium when every agent shares the same preferences.
 *
 * The mean inventory solves the linear two-point problem
 *
 *     2 kappa E'' + alpha E' - 2 phi E = 0,   E(0) = E0,   kappa E'(T) + A E(T) = 0,
 *
 * whose solution is E(t) = E0 (a e^{r+ t} + (1 - a) e^{r- t}) with
 * r+- = -alpha/(4 kappa) +- theta. The reduced value function is
 * v(t, q) = h0(t) + q h1(t) - q^2 h2(t) / 2 where h2 solves a Riccati equation,
 * h1 = 2 kappa E' + h2 E and h0 integrates h1^2 backwards from T.
 *
 * Every evaluator is analytic except h0, which uses a composite trapezoid
 * rule on a fixed uniform grid built at construction.
 */
class HomogeneousSolution {
public:
    HomogeneousSolution(const MarketParams& market, const Preference& pref,
                        std::size_t grid_steps = 1000);

    const MarketParams& market() const noexcept { return market_; }
    const Preference& pref() const noexcept { return pref_; }

    double theta() const noexcept { return theta_; }
    double r_plus() const noexcept { return r_plus_; }
    double r_minus() const noexcept { return r_minus_; }
    /// Mixing coefficient a. May underflow to 0 for long horizons; evaluators do not use it directly.
    double a_coef() const noexcept;
    double r() const noexcept { return r_; }
    double c2() const noexcept;
    /// True when theta == 0 (phi = alpha = 0) and E is affine in t.
    bool affine_inventory() const noexcept { return affine_; }

    double E(double t) const;
    double E_prime(double t) const;
    double E_second(double t) const;

    double h2(double t) const;
    double h2_prime(double t) const;
    double h1(double t) const;
    double h1_prime(double t) const;
    double h0(double t) const;

    /// exp(-int_0^t h2 / (2 kappa)): how a gap between own and mean inventory decays.
    double deviation_decay(double t) const;
    /// Inventory at t of an agent starting from q0 and trading optimally.
    double individual_inventory(double t, double q0) const {
        return E(t) + (q0 - pref_.E0) * deviation_decay(t);
    }

    /// Net flow mu(t); equals E'(t) in the homogeneous equilibrium.
    double mu(double t) const { return E_prime(t); }

    std::size_t quadrature_intervals() const noexcept { return h1_sq_.size() - 1; }

private:
    double check(double t) const;
    double exp_plus(double t) const;   // a e^{r+ t}, computed without forming a
    double exp_minus(double t) const;  // (1 - a) e^{r- t}

    MarketParams market_;
    Preference pref_;
    double theta_ = 0.0;
    double r_plus_ = 0.0;
    double r_minus_ = 0.0;
    double plus_weight_ = 0.0;   // a e^{2 theta T}
    double minus_weight_ = 1.0;  // 1 - a
    bool affine_ = false;
    double affine_slope_ = 0.0;  // dE/dt / E0 in the affine regime

    double r_ = 0.0;
    double riccati_ratio_ = 0.0;  // (1 - rho)/(1 + rho), rho = A / sqrt(kappa phi)

    double quad_dt_ = 0.0;
    std::vector<double> h1_sq_;
    std::vector<double> tail_;  // tail_[j] = integral of h1^2 over [t_j, T]
};

/// Builds the closed-form solution. Throws ScenarioError on invalid parameters.
HomogeneousSolution solve_homogeneous(const MarketParams& market, const Preference& pref,
                                      std::size_t grid_steps = 1000);

/// Optimal trading speed nu(t, q) = (h1(t) - q h2(t)) / (2 kappa).
double optimal_speed(const HomogeneousSolution& sol, double t, double q);

/// Reduced value v(t, q) = h0 + q h1 - q^2 h2 / 2.
double value_function(const HomogeneousSolution& sol, double t, double q);

/// Full value x + q s + v(t, q).
double full_value(const HomogeneousSolution& sol, double t, double cash, double price, double q);

/**
 * Smallest t in (0, T) with E'(t) = 0: sign-change scan over `scan_intervals`
 * intervals followed by bisection to `tolerance`. Returns nullopt when E' keeps
 * one sign on (0, T) or vanishes identically.
 */
std::optional<double> find_slope_reversal(const HomogeneousSolution& sol,
                                          std::size_t scan_intervals = 1000,
                                          double tolerance = 1e-8);

}  // namespace crowdtrade
