#include "crowdtrade/pde_solver.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "crowdtrade/closed_form.hpp"
#include "crowdtrade/errors.hpp"
#include "crowdtrade/parallel.hpp"

namespace crowdtrade {

namespace {

static_assert(std::endian::native == std::endian::little,
              "field dumps assume a little-endian host");

constexpr char kFieldMagic[8] = {'C', 'T', 'F', 'I', 'E', 'L', 'D', '1'};

// Face gradients g[f] = (v[f+1] - v[f]) / dq for f = 0..n-1, plus linearly
// extrapolated ghost faces at both ends (index -1 and n stored at 0 and n+1).
void face_gradients(std::span<const double> v, double dq, std::vector<double>& g) {
    const std::size_t faces = v.size() - 1;
    g.resize(faces + 2);
    for (std::size_t f = 0; f < faces; ++f) g[f + 1] = (v[f + 1] - v[f]) / dq;
    g[0] = 2.0 * g[1] - g[2];
    g[faces + 1] = 2.0 * g[faces] - g[faces - 1];
}

double max_abs(const std::vector<double>& x) {
    double m = 0.0;
    for (double v : x) m = std::max(m, std::abs(v));
    return m;
}

// Number of equal sub-steps needed to cover `span` at speed bound `limit`.
double substep(double remaining, double limit) {
    if (!std::isfinite(limit)) return remaining;
    const double count = std::ceil(remaining / limit * (1.0 - 1e-12));
    return remaining / std::max(count, 1.0);
}

std::string cfl_message(const char* what, double dt, double limit) {
    std::ostringstream msg;
    msg << what << ": CFL violated (dt " << dt << " > limit " << limit
        << "); use a finer time grid or enable adaptive sub-stepping";
    return msg.str();
}

}  // namespace

void PdeGrid::validate() const {
    if (!(T > 0.0) || !std::isfinite(T)) throw ScenarioError("PDE grid horizon must be positive");
    if (time_steps < 1) throw ScenarioError("PDE grid needs at least one time step");
    if (q_intervals < 3) throw ScenarioError("PDE grid needs at least three q intervals");
    if (!(q_min < q_max) || !std::isfinite(q_min) || !std::isfinite(q_max)) {
        throw ScenarioError("PDE grid needs finite q_min < q_max");
    }
}

PdeGrid default_pde_grid(const MarketParams& market, const PopulationSpec& pop,
                         std::size_t time_steps, std::size_t q_intervals) {
    double scale = 0.0;
    bool any_positive = false;
    bool any_negative = false;
    for (const auto& type : pop.types) {
        scale = std::max(scale, std::abs(type.pref.E0) + 6.0 * type.init_stdev);
        any_positive |= type.pref.E0 > 0.0;
        any_negative |= type.pref.E0 < 0.0;
    }
    if (!(scale > 0.0)) scale = 1.0;
    PdeGrid grid{market.T, time_steps, -1.5 * scale, 1.5 * scale, q_intervals};
    if (any_positive && !any_negative) {
        grid.q_min = -0.5 * scale;
    } else if (any_negative && !any_positive) {
        grid.q_max = 0.5 * scale;
    }
    return grid;
}

HjbResult solve_hjb_backward(const MarketParams& market, const Preference& pref,
                             const PdeGrid& grid, std::span<const double> mu,
                             const PdeOptions& options) {
    grid.validate();
    if (mu.size() != grid.time_nodes()) throw ScenarioError("flow size does not match PDE grid");
    const std::size_t nq = grid.q_nodes();
    const double dq = grid.dq();
    const double dt = grid.dt();
    const double kappa = market.kappa;

    HjbResult out{Field(grid.time_nodes(), nq)};
    std::vector<double> cur(nq);
    std::vector<double> next(nq);
    std::vector<double> g;
    for (std::size_t i = 0; i < nq; ++i) {
        const double q = grid.q(i);
        cur[i] = -pref.A * q * q;
    }
    std::copy(cur.begin(), cur.end(), out.v.row(grid.time_steps).begin());

    for (std::size_t n = grid.time_steps; n-- > 0;) {
        double remaining = dt;
        double time = grid.t(n + 1);
        while (remaining > 0.0) {
            face_gradients(cur, dq, g);
            const double max_p = max_abs(g);
            out.max_gradient = std::max(out.max_gradient, max_p);
            const double limit = max_p > 0.0 ? options.cfl * dq * 2.0 * kappa / max_p
                                             : std::numeric_limits<double>::infinity();
            double step = remaining;
            if (options.adaptive) {
                step = substep(remaining, limit);
            } else if (step > limit * (1.0 + 1e-12)) {
                throw NumericalError(cfl_message("HJ sweep", step, limit));
            }
            if (++out.substeps > options.max_substeps) {
                throw NumericalError("HJ sweep: sub-step budget exhausted; gradients are too "
                                     "steep for this grid, use a finer time grid or narrower q range");
            }
            // Linear interpolation of the flow inside [t_n, t_{n+1}].
            const double w = (time - grid.t(n)) / dt;
            const double flow = (1.0 - w) * mu[n] + w * mu[n + 1];
            for (std::size_t i = 0; i < nq; ++i) {
                const double q = grid.q(i);
                const double p_minus = g[i];
                const double p_plus = g[i + 1];
                const double p_mid = 0.5 * (p_minus + p_plus);
                const double beta = std::max(std::abs(p_minus), std::abs(p_plus)) / (2.0 * kappa);
                next[i] = cur[i] + step * (p_mid * p_mid / (4.0 * kappa) - pref.phi * q * q +
                                           market.alpha * q * flow +
                                           0.5 * beta * (p_plus - p_minus));
            }
            cur.swap(next);
            time -= step;
            remaining -= step;
            if (remaining <= 1e-12 * dt) remaining = 0.0;
        }
        std::copy(cur.begin(), cur.end(), out.v.row(n).begin());
    }
    return out;
}

TransportResult solve_transport_forward(const MarketParams& market, const PdeGrid& grid,
                                        const Field& v, std::span<const double> m0,
                                        const PdeOptions& options) {
    grid.validate();
    const std::size_t nq = grid.q_nodes();
    if (v.rows != grid.time_nodes() || v.cols != nq) {
        throw ScenarioError("value field does not match PDE grid");
    }
    if (m0.size() != nq) throw ScenarioError("initial density does not match PDE grid");
    const double dq = grid.dq();
    const double dt = grid.dt();
    const double two_kappa = 2.0 * market.kappa;

    TransportResult out{Field(grid.time_nodes(), nq)};
    out.first_moment.assign(grid.time_nodes(), 0.0);
    std::vector<double> cur(m0.begin(), m0.end());
    std::vector<double> next(nq);
    std::vector<double> g_lo;
    std::vector<double> g_hi;
    std::vector<double> b(nq + 1);
    std::vector<double> flux(nq + 1);

    const auto record = [&](std::size_t n) {
        double mass = 0.0;
        double moment = 0.0;
        for (std::size_t i = 0; i < nq; ++i) {
            mass += cur[i] * dq;
            moment += grid.q(i) * cur[i] * dq;
        }
        out.max_mass_error = std::max(out.max_mass_error, std::abs(mass - 1.0));
        out.first_moment[n] = moment;
        std::copy(cur.begin(), cur.end(), out.m.row(n).begin());
    };
    record(0);

    for (std::size_t n = 0; n < grid.time_steps; ++n) {
        face_gradients(v.row(n), dq, g_lo);
        face_gradients(v.row(n + 1), dq, g_hi);
        double remaining = dt;
        double time = grid.t(n);
        while (remaining > 0.0) {
            const double w = (time - grid.t(n)) / dt;
            double max_b = 0.0;
            // b[f] is the velocity on face f - 1/2 for f = 0..nq (0 and nq are the ghost faces).
            for (std::size_t f = 0; f <= nq; ++f) {
                b[f] = ((1.0 - w) * g_lo[f] + w * g_hi[f]) / two_kappa;
                max_b = std::max(max_b, std::abs(b[f]));
            }
            const double limit = max_b > 0.0 ? options.cfl * dq / max_b
                                             : std::numeric_limits<double>::infinity();
            double step = remaining;
            if (options.adaptive) {
                step = substep(remaining, limit);
            } else if (step > limit * (1.0 + 1e-12)) {
                throw NumericalError(cfl_message("transport sweep", step, limit));
            }
            if (++out.substeps > options.max_substeps) {
                throw NumericalError("transport sweep: sub-step budget exhausted");
            }
            flux[0] = 0.0;
            flux[nq] = 0.0;
            for (std::size_t f = 1; f < nq; ++f) {
                flux[f] = std::max(b[f], 0.0) * cur[f - 1] + std::min(b[f], 0.0) * cur[f];
            }
            out.leaked_mass +=
                step * (std::max(-b[0], 0.0) * cur[0] + std::max(b[nq], 0.0) * cur[nq - 1]);
            for (std::size_t i = 0; i < nq; ++i) {
                next[i] = cur[i] - step / dq * (flux[i + 1] - flux[i]);
            }
            cur.swap(next);
            time += step;
            remaining -= step;
            if (remaining <= 1e-12 * dt) remaining = 0.0;
        }
        record(n + 1);
        if (out.leaked_mass > options.leak_limit) {
            std::ostringstream msg;
            msg << "transport sweep: " << out.leaked_mass
                << " mass pushed against the q boundaries by t = " << grid.t(n + 1)
                << "; widen the inventory range";
            throw NumericalError(msg.str());
        }
    }
    return out;
}

std::vector<double> initial_density(const PdeGrid& grid, double mean, double stdev) {
    grid.validate();
    const std::size_t nq = grid.q_nodes();
    const double dq = grid.dq();
    std::vector<double> m(nq, 0.0);
    if (stdev > 0.0) {
        for (std::size_t i = 0; i < nq; ++i) {
            const double z = (grid.q(i) - mean) / stdev;
            m[i] = std::exp(-0.5 * z * z);
        }
    } else {
        const double x = (mean - grid.q_min) / dq;
        if (!(x >= 0.0 && x <= static_cast<double>(nq - 1))) {
            throw ScenarioError("initial inventory lies outside the PDE q range");
        }
        const auto i = std::min(static_cast<std::size_t>(std::floor(x)), nq - 2);
        const double frac = x - static_cast<double>(i);
        m[i] = 1.0 - frac;
        m[i + 1] = frac;
    }
    double mass = 0.0;
    for (double v : m) mass += v * dq;
    if (!(mass > 0.0)) throw ScenarioError("initial density has no mass on the PDE q range");
    for (double& v : m) v /= mass;
    return m;
}

std::vector<double> type_flow(const MarketParams& market, const PdeGrid& grid, const Field& v,
                              const Field& m, FlowQuadrature quadrature) {
    const std::size_t nq = grid.q_nodes();
    std::vector<double> flow(grid.time_nodes(), 0.0);
    for (std::size_t n = 0; n < grid.time_nodes(); ++n) {
        const auto vr = v.row(n);
        const auto mr = m.row(n);
        double sum = 0.0;
        for (std::size_t f = 0; f + 1 < nq; ++f) {
            const double jump = vr[f + 1] - vr[f];
            if (quadrature == FlowQuadrature::upwind) {
                sum += std::max(jump, 0.0) * mr[f] + std::min(jump, 0.0) * mr[f + 1];
            } else {
                sum += jump * 0.5 * (mr[f] + mr[f + 1]);
            }
        }
        flow[n] = sum / (2.0 * market.kappa);
    }
    return flow;
}

namespace {

struct Sweep {
    std::vector<Field> v;
    std::vector<Field> m;
    std::vector<std::vector<double>> moments;
    std::vector<double> flow;
    double max_mass_error = 0.0;
    double leaked_mass = 0.0;
};

Sweep run_sweep(const MarketParams& market, const PopulationSpec& pop, const PdeGrid& grid,
                const std::vector<std::vector<double>>& densities, std::span<const double> mu,
                const PdeOptions& options) {
    const std::size_t types = pop.size();
    Sweep s{std::vector<Field>(types), std::vector<Field>(types),
            std::vector<std::vector<double>>(types)};
    std::vector<std::vector<double>> flows(types);
    std::vector<double> mass_errors(types);
    std::vector<double> leaks(types);
    parallel_for(types, [&](std::size_t k) {
        auto hjb = solve_hjb_backward(market, pop.types[k].pref, grid, mu, options);
        auto transport = solve_transport_forward(market, grid, hjb.v, densities[k], options);
        flows[k] = type_flow(market, grid, hjb.v, transport.m, options.flow_quadrature);
        mass_errors[k] = transport.max_mass_error;
        leaks[k] = transport.leaked_mass;
        s.moments[k] = std::move(transport.first_moment);
        s.v[k] = std::move(hjb.v);
        s.m[k] = std::move(transport.m);
    });
    s.flow.assign(grid.time_nodes(), 0.0);
    for (std::size_t k = 0; k < types; ++k) {
        for (std::size_t n = 0; n < s.flow.size(); ++n) {
            s.flow[n] += pop.types[k].weight * flows[k][n];
        }
        s.max_mass_error = std::max(s.max_mass_error, mass_errors[k]);
        s.leaked_mass = std::max(s.leaked_mass, leaks[k]);
    }
    return s;
}

double sup_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

struct FixedPoint {
    std::vector<double> mu;
    Sweep sweep;
    std::size_t iterations = 0;
    double residual = 0.0;
    std::vector<double> history;
};

FixedPoint iterate(const MarketParams& market, const PopulationSpec& pop, const PdeGrid& grid,
                   const std::vector<std::vector<double>>& densities, std::vector<double> mu,
                   const PdeOptions& options) {
    FixedPoint fp;
    if (market.alpha == 0.0) {
        // The flow never feeds back, so one evaluation is the fixed point.
        fp.sweep = run_sweep(market, pop, grid, densities, mu, options);
        fp.mu = fp.sweep.flow;
        fp.iterations = 1;
        fp.history = {sup_distance(mu, fp.mu)};
        fp.residual = 0.0;
        return fp;
    }
    const double lambda = options.damping;
    for (std::size_t it = 1; it <= options.max_iter; ++it) {
        const auto sweep = run_sweep(market, pop, grid, densities, mu, options);
        double change = 0.0;
        for (std::size_t n = 0; n < mu.size(); ++n) {
            const double next = (1.0 - lambda) * mu[n] + lambda * sweep.flow[n];
            change = std::max(change, std::abs(next - mu[n]));
            mu[n] = next;
        }
        fp.history.push_back(change);
        fp.iterations = it;
        if (!std::isfinite(change)) {
            throw ConvergenceError("PDE fixed point diverged", fp.history);
        }
        if (change <= options.tol) {
            fp.sweep = run_sweep(market, pop, grid, densities, mu, options);
            fp.residual = sup_distance(mu, fp.sweep.flow);
            fp.mu = std::move(mu);
            return fp;
        }
    }
    std::ostringstream msg;
    msg << "PDE fixed point did not converge in " << options.max_iter << " iterations (last update "
        << fp.history.back() << ")";
    throw ConvergenceError(msg.str(), fp.history);
}

}  // namespace

PdeState solve_mfg_fixed_point(const MarketParams& market, const PopulationSpec& pop,
                               const PdeGrid& grid, const PdeOptions& options) {
    require_valid(market, pop);
    grid.validate();
    if (std::abs(grid.T - market.T) > 1e-12 * market.T) {
        throw ScenarioError("PDE grid horizon differs from the market horizon");
    }
    if (!(options.tol > 0.0)) throw ScenarioError("PDE tolerance must be positive");
    if (!(options.damping > 0.0 && options.damping <= 1.0)) {
        throw ScenarioError("PDE damping must lie in (0, 1]");
    }

    std::vector<std::vector<double>> densities;
    for (const auto& type : pop.types) {
        densities.push_back(initial_density(grid, type.pref.E0, type.init_stdev));
    }

    std::vector<double> start(grid.time_nodes(), 0.0);
    if (options.initial_flow) {
        if (options.initial_flow->size() != start.size()) {
            throw ScenarioError("initial flow does not match the PDE time grid");
        }
        start = *options.initial_flow;
    } else if (pop.identical_preferences()) {
        Preference mean_pref = pop.types.front().pref;
        mean_pref.E0 = pop.mean_initial_inventory();
        const HomogeneousSolution guess(market, mean_pref, 10);
        for (std::size_t n = 0; n < start.size(); ++n) start[n] = guess.E_prime(grid.t(n));
    }

    auto fp = iterate(market, pop, grid, densities, start, options);

    PdeState state;
    state.grid = grid;
    if (options.check_uniqueness && market.alpha != 0.0) {
        std::vector<double> other(start.size(), 0.0);
        if (max_abs(start) == 0.0) other.assign(start.size(), 1.0);
        const auto alt = iterate(market, pop, grid, densities, other, options);
        const double gap = sup_distance(fp.mu, alt.mu);
        if (gap > 10.0 * options.tol / options.damping) {
            std::ostringstream msg;
            msg << "converged flow depends on the starting flow (sup gap " << gap
                << "); the equilibrium may not be unique";
            state.warnings.push_back(msg.str());
        }
    }

    state.mu = std::move(fp.mu);
    state.iterations = fp.iterations;
    state.residual = fp.residual;
    state.residual_history = std::move(fp.history);
    state.max_mass_error = fp.sweep.max_mass_error;
    state.leaked_mass = fp.sweep.leaked_mass;
    state.mean_inventory.assign(grid.time_nodes(), 0.0);
    for (std::size_t k = 0; k < pop.size(); ++k) {
        for (std::size_t n = 0; n < grid.time_nodes(); ++n) {
            state.mean_inventory[n] += pop.types[k].weight * fp.sweep.moments[k][n];
        }
    }
    state.type_moments = std::move(fp.sweep.moments);
    state.v = std::move(fp.sweep.v);
    state.m = std::move(fp.sweep.m);
    return state;
}

void write_field(std::ostream& out, const Field& field) {
    const std::uint64_t dims[2] = {field.rows, field.cols};
    out.write(kFieldMagic, sizeof kFieldMagic);
    out.write(reinterpret_cast<const char*>(dims), sizeof dims);
    out.write(reinterpret_cast<const char*>(field.data.data()),
              static_cast<std::streamsize>(field.data.size() * sizeof(double)));
    if (!out) throw Error("failed to write field dump");
}

Field read_field(std::istream& in) {
    char magic[8];
    std::uint64_t dims[2];
    in.read(magic, sizeof magic);
    in.read(reinterpret_cast<char*>(dims), sizeof dims);
    if (!in || std::memcmp(magic, kFieldMagic, sizeof magic) != 0) {
        throw Error("not a field dump");
    }
    Field field(dims[0], dims[1]);
    in.read(reinterpret_cast<char*>(field.data.data()),
            static_cast<std::streamsize>(field.data.size() * sizeof(double)));
    if (!in) throw Error("truncated field dump");
    return field;
}

}  // namespace crowdtrade
