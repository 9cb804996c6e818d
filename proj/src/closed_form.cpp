#include "crowdtrade/closed_form.hpp"

#include <algorithm>
#include <cmath>

#include "crowdtrade/errors.hpp"

namespace crowdtrade {

HomogeneousSolution::HomogeneousSolution(const MarketParams& market, const Preference& pref,
                                         std::size_t grid_steps)
    : market_(market), pref_(pref) {
    require_valid(market, PopulationSpec::single(pref));
    if (grid_steps < 1) throw ScenarioError("closed form needs at least one quadrature step");

    const double kappa = market.kappa;
    const double alpha = market.alpha;
    const double T = market.T;
    const double A = pref.A;

    theta_ = std::sqrt(kappa * pref.phi + alpha * alpha / 16.0) / kappa;
    if (theta_ > 0.0) {
        r_plus_ = -alpha / (4.0 * kappa) + theta_;
        r_minus_ = -alpha / (4.0 * kappa) - theta_;
        // With P = kappa theta - alpha/4 + A and M = kappa theta + alpha/4 - A the terminal
        // condition gives a = M e^{-2 theta T} / (P + M e^{-2 theta T}); the denominator is
        // e^{-theta T} times a quantity that stays positive whenever theta > 0.
        const double P = kappa * theta_ - alpha / 4.0 + A;
        const double M = kappa * theta_ + alpha / 4.0 - A;
        const double decay = std::exp(-2.0 * theta_ * T);
        const double denom = P + M * decay;
        if (!(denom > 0.0)) {
            throw NumericalError("closed form: terminal-condition denominator is not positive");
        }
        plus_weight_ = M / denom;
        minus_weight_ = 1.0 - plus_weight_ * decay;
    } else {
        // phi = alpha = 0: 2 kappa E'' = 0, so E is affine.
        affine_ = true;
        affine_slope_ = -A / (kappa + A * T);
    }

    if (pref.phi > 0.0) {
        r_ = 2.0 * std::sqrt(pref.phi / kappa);
        const double rho = A / std::sqrt(kappa * pref.phi);
        riccati_ratio_ = (1.0 - rho) / (1.0 + rho);
    }

    const std::size_t n = 10 * grid_steps;
    quad_dt_ = T / static_cast<double>(n);
    h1_sq_.resize(n + 1);
    tail_.assign(n + 1, 0.0);
    for (std::size_t j = 0; j <= n; ++j) {
        const double t = static_cast<double>(j) * T / static_cast<double>(n);
        const double v = h1(t);
        h1_sq_[j] = v * v;
    }
    for (std::size_t j = n; j-- > 0;) {
        tail_[j] = tail_[j + 1] + 0.5 * quad_dt_ * (h1_sq_[j] + h1_sq_[j + 1]);
    }
}

double HomogeneousSolution::a_coef() const noexcept {
    return affine_ ? 0.0 : plus_weight_ * std::exp(-2.0 * theta_ * market_.T);
}

double HomogeneousSolution::c2() const noexcept {
    if (pref_.phi == 0.0) return 0.0;
    return -riccati_ratio_ * std::exp(-r_ * market_.T);
}

double HomogeneousSolution::check(double t) const { return checked_time(t, market_.T); }

double HomogeneousSolution::exp_plus(double t) const {
    return plus_weight_ * std::exp(r_plus_ * t - 2.0 * theta_ * market_.T);
}

double HomogeneousSolution::exp_minus(double t) const {
    return minus_weight_ * std::exp(r_minus_ * t);
}

double HomogeneousSolution::E(double t) const {
    t = check(t);
    if (affine_) return pref_.E0 * (1.0 + affine_slope_ * t);
    return pref_.E0 * (exp_plus(t) + exp_minus(t));
}

double HomogeneousSolution::E_prime(double t) const {
    t = check(t);
    if (affine_) return pref_.E0 * affine_slope_;
    return pref_.E0 * (r_plus_ * exp_plus(t) + r_minus_ * exp_minus(t));
}

double HomogeneousSolution::E_second(double t) const {
    t = check(t);
    if (affine_) return 0.0;
    return pref_.E0 * (r_plus_ * r_plus_ * exp_plus(t) + r_minus_ * r_minus_ * exp_minus(t));
}

double HomogeneousSolution::h2(double t) const {
    t = check(t);
    const double kappa = market_.kappa;
    const double A = pref_.A;
    if (pref_.phi == 0.0) return 2.0 * A * kappa / (kappa + A * (market_.T - t));
    const double x = -riccati_ratio_ * std::exp(r_ * (t - market_.T));
    if (!(1.0 - x > 0.0)) throw NumericalError("closed form: h2 has a pole on the horizon");
    return 2.0 * std::sqrt(kappa * pref_.phi) * (1.0 + x) / (1.0 - x);
}

double HomogeneousSolution::h2_prime(double t) const {
    t = check(t);
    const double kappa = market_.kappa;
    if (pref_.phi == 0.0) {
        const double h = h2(t);
        return h * h / (2.0 * kappa);
    }
    const double x = -riccati_ratio_ * std::exp(r_ * (t - market_.T));
    const double d = 1.0 - x;
    return 4.0 * std::sqrt(kappa * pref_.phi) * r_ * x / (d * d);
}

double HomogeneousSolution::deviation_decay(double t) const {
    t = check(t);
    const double kappa = market_.kappa;
    const double A = pref_.A;
    if (pref_.phi == 0.0) return (kappa + A * (market_.T - t)) / (kappa + A * market_.T);
    const double x_t = -riccati_ratio_ * std::exp(r_ * (t - market_.T));
    const double x_0 = -riccati_ratio_ * std::exp(-r_ * market_.T);
    return std::exp(-std::sqrt(kappa * pref_.phi) / kappa * t) * (1.0 - x_t) / (1.0 - x_0);
}

double HomogeneousSolution::h1(double t) const {
    return 2.0 * market_.kappa * E_prime(t) + h2(t) * E(t);
}

double HomogeneousSolution::h1_prime(double t) const {
    return 2.0 * market_.kappa * E_second(t) + h2_prime(t) * E(t) + h2(t) * E_prime(t);
}

double HomogeneousSolution::h0(double t) const {
    t = check(t);
    const std::size_t n = h1_sq_.size() - 1;
    auto j = static_cast<std::size_t>(std::floor(t / quad_dt_));
    if (j >= n) return 0.0;
    const double next = static_cast<double>(j + 1) * market_.T / static_cast<double>(n);
    const double v = h1(t);
    const double partial = 0.5 * (next - t) * (v * v + h1_sq_[j + 1]);
    return (tail_[j + 1] + partial) / (4.0 * market_.kappa);
}

HomogeneousSolution solve_homogeneous(const MarketParams& market, const Preference& pref,
                                      std::size_t grid_steps) {
    return HomogeneousSolution(market, pref, grid_steps);
}

double optimal_speed(const HomogeneousSolution& sol, double t, double q) {
    return (sol.h1(t) - q * sol.h2(t)) / (2.0 * sol.market().kappa);
}

double value_function(const HomogeneousSolution& sol, double t, double q) {
    return sol.h0(t) + q * sol.h1(t) - 0.5 * q * q * sol.h2(t);
}

double full_value(const HomogeneousSolution& sol, double t, double cash, double price,
                  double q) {
    return cash + q * price + value_function(sol, t, q);
}

std::optional<double> find_slope_reversal(const HomogeneousSolution& sol,
                                          std::size_t scan_intervals, double tolerance) {
    const double E0 = sol.pref().E0;
    if (E0 == 0.0 || scan_intervals < 2) return std::nullopt;
    const double T = sol.market().T;
    const double rate = sol.affine_inventory()
                            ? std::abs(sol.E_prime(0.0) / E0)
                            : std::max(std::abs(sol.r_plus()), std::abs(sol.r_minus()));
    const double zero = 1e-12 * std::abs(E0) * std::max(rate, 1e-300);
    const auto sign = [&](double v) { return std::abs(v) <= zero ? 0 : (v > 0.0 ? 1 : -1); };

    const auto node = [&](std::size_t j) {
        return static_cast<double>(j) * T / static_cast<double>(scan_intervals);
    };
    std::vector<int> s(scan_intervals + 1);
    for (std::size_t j = 0; j <= scan_intervals; ++j) s[j] = sign(sol.E_prime(node(j)));

    for (std::size_t j = 0; j < scan_intervals; ++j) {
        if (j > 0 && s[j] == 0 && s[j - 1] * s[j + 1] < 0) return node(j);
        if (s[j] * s[j + 1] < 0) {
            double lo = node(j);
            double hi = node(j + 1);
            const int lo_sign = s[j];
            while (hi - lo > tolerance) {
                const double mid = 0.5 * (lo + hi);
                const int m = sign(sol.E_prime(mid));
                if (m == 0) return mid;
                (m == lo_sign ? lo : hi) = mid;
            }
            return 0.5 * (lo + hi);
        }
    }
    return std::nullopt;
}

}  // namespace crowdtrade
