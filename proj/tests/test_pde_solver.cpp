#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "crowdtrade/closed_form.hpp"
#include "crowdtrade/errors.hpp"
#include "crowdtrade/pde_solver.hpp"
#include "test_support.hpp"

using namespace crowdtrade;
using testing::reference_market;
using testing::reference_pref;

namespace {

std::vector<double> closed_form_flow(const HomogeneousSolution& sol, const PdeGrid& g) {
    std::vector<double> mu(g.time_nodes());
    for (std::size_t n = 0; n < mu.size(); ++n) mu[n] = sol.mu(g.t(n));
    return mu;
}

double mass(const PdeGrid& g, std::span<const double> m) {
    double s = 0.0;
    for (double x : m) s += x;
    return s * g.dq();
}

/// max |v - v_exact| / max |v_exact| over |q| <= q_cap.
double hjb_error(std::size_t nt, std::size_t nq) {
    const auto sol = solve_homogeneous(reference_market(), reference_pref());
    const PdeGrid g{5.0, nt, -20.0, 20.0, nq};
    const auto hjb = solve_hjb_backward(reference_market(), reference_pref(), g, closed_form_flow(sol, g));
    double num = 0.0, den = 0.0;
    for (std::size_t n = 0; n < g.time_nodes(); ++n)
        for (std::size_t i = 0; i < g.q_nodes(); ++i) {
            if (std::abs(g.q(i)) > 15.0 + 1e-12) continue;
            const double exact = value_function(sol, g.t(n), g.q(i));
            num = std::max(num, std::abs(hjb.v(n, i) - exact));
            den = std::max(den, std::abs(exact));
        }
    return num / den;
}

}  // namespace

TEST_CASE("grid validation and default window") {
    PdeGrid g{1.0, 10, 1.0, -1.0, 10};
    CHECK_THROWS_AS(g.validate(), ScenarioError);
    const auto pop = PopulationSpec::single({0.1, 2.5, 10.0}, 0.25);
    const auto d = default_pde_grid(reference_market(), pop);
    CHECK(d.q_min == doctest::Approx(-0.5 * 11.5));
    CHECK(d.q_max == doctest::Approx(1.5 * 11.5));
    const auto neg = default_pde_grid(reference_market(), PopulationSpec::single({0.1, 2.5, -10.0}, 0.25));
    CHECK(neg.q_min == doctest::Approx(-1.5 * 11.5));
    CHECK(neg.q_max == doctest::Approx(0.5 * 11.5));
}

TEST_CASE("zero data gives a zero value function") {
    const PdeGrid g{2.0, 200, -3.0, 3.0, 60};
    const auto hjb = solve_hjb_backward({0.3, 0.5, 0.0, 2.0}, {0.0, 0.0, 1.0}, g,
                                        std::vector<double>(g.time_nodes(), 0.0));
    for (double x : hjb.v.data) CHECK(x == 0.0);
}

TEST_CASE("terminal slice is assigned exactly") {
    const PdeGrid g{5.0, 100, -4.0, 12.0, 80};
    const auto hjb = solve_hjb_backward(reference_market(), reference_pref(), g,
                                        std::vector<double>(g.time_nodes(), 0.0));
    for (std::size_t i = 0; i < g.q_nodes(); ++i) CHECK(hjb.v(g.time_steps, i) == -2.5 * g.q(i) * g.q(i));
}

TEST_CASE("value function matches the closed form and converges") {
    const double coarse = hjb_error(1000, 200);
    const double fine = hjb_error(2000, 400);
    CHECK(fine <= 0.02);
    CHECK(coarse / fine >= 2.0);
}

TEST_CASE("CFL violation without sub-stepping is an error") {
    const PdeGrid g{5.0, 10, -20.0, 20.0, 400};
    PdeOptions o;
    o.adaptive = false;
    CHECK_THROWS_AS(solve_hjb_backward(reference_market(), reference_pref(), g,
                                       std::vector<double>(g.time_nodes(), 0.0), o),
                    NumericalError);
}

TEST_CASE("a zero velocity field leaves the density in place") {
    const PdeGrid g{1.0, 50, -2.0, 2.0, 40};
    const Field v(g.time_nodes(), g.q_nodes());
    const auto m0 = initial_density(g, 0.3, 0.4);
    const auto tr = solve_transport_forward({0.0, 1.0, 0.0, 1.0}, g, v, m0);
    for (std::size_t n = 0; n < g.time_nodes(); ++n)
        for (std::size_t i = 0; i < g.q_nodes(); ++i) CHECK(tr.m(n, i) == m0[i]);
}

TEST_CASE("initial densities have unit mass and the requested mean") {
    const PdeGrid g{1.0, 10, -5.0, 15.0, 400};
    for (double sd : {0.0, 0.25, 1.0}) {
        const auto m = initial_density(g, 10.0, sd);
        CHECK(mass(g, m) == doctest::Approx(1.0).epsilon(1e-12));
        double mean = 0.0;
        for (std::size_t i = 0; i < m.size(); ++i) mean += g.q(i) * m[i] * g.dq();
        CHECK(mean == doctest::Approx(10.0).epsilon(1e-6));
        CHECK(*std::min_element(m.begin(), m.end()) >= 0.0);
    }
}

TEST_CASE("transport under the closed-form value tracks the mean inventory") {
    const auto sol = solve_homogeneous(reference_market(), reference_pref());
    const auto pop = PopulationSpec::single(reference_pref(), 0.5);
    const auto g = default_pde_grid(reference_market(), pop, 2000, 400);
    const auto hjb = solve_hjb_backward(reference_market(), reference_pref(), g, closed_form_flow(sol, g));
    const auto tr = solve_transport_forward(reference_market(), g, hjb.v, initial_density(g, 10.0, 0.5));
    double err = 0.0, scale = 0.0;
    for (std::size_t n = 0; n < g.time_nodes(); ++n) {
        err = std::max(err, std::abs(tr.first_moment[n] - sol.E(g.t(n))));
        scale = std::max(scale, std::abs(sol.E(g.t(n))));
        CHECK(mass(g, tr.m.row(n)) == doctest::Approx(1.0).epsilon(1e-6));
    }
    CHECK(err / scale <= 0.02);
    CHECK(tr.max_mass_error <= 1e-6);
    CHECK(*std::min_element(tr.m.data.begin(), tr.m.data.end()) >= 0.0);
}

TEST_CASE("boundary leaks are reported") {
    const auto sol = solve_homogeneous(reference_market(), reference_pref());
    const PdeGrid g{5.0, 500, 2.0, 12.0, 100};
    const auto hjb = solve_hjb_backward(reference_market(), reference_pref(), g, closed_form_flow(sol, g));
    CHECK_THROWS_AS(solve_transport_forward(reference_market(), g, hjb.v, initial_density(g, 10.0, 0.25)),
                    NumericalError);
}

TEST_CASE("fixed point on the reference scenario") {
    const auto pop = PopulationSpec::single(reference_pref(), 0.25);
    const auto g = default_pde_grid(reference_market(), pop, 2000, 400);
    const auto sol = solve_homogeneous(reference_market(), reference_pref());
    PdeOptions o;
    const auto st = solve_mfg_fixed_point(reference_market(), pop, g, o);
    double err = 0.0, scale = 0.0;
    for (std::size_t n = 0; n < g.time_nodes(); ++n) {
        err = std::max(err, std::abs(st.mean_inventory[n] - sol.E(g.t(n))));
        scale = std::max(scale, std::abs(sol.E(g.t(n))));
    }
    CHECK(err / scale <= 0.02);
    CHECK(st.residual <= 2 * o.tol / o.damping);
    CHECK(st.max_mass_error <= 1e-6);
    for (const auto& m : st.m) CHECK(*std::min_element(m.data.begin(), m.data.end()) >= 0.0);
    for (std::size_t i = 0; i < g.q_nodes(); ++i) CHECK(st.v[0](g.time_steps, i) == -2.5 * g.q(i) * g.q(i));
}

namespace {

double fixed_point_error(std::size_t nt, std::size_t nq, FlowQuadrature quadrature) {
    const auto pop = PopulationSpec::single(reference_pref(), 0.25);
    const auto sol = solve_homogeneous(reference_market(), reference_pref());
    const auto g = default_pde_grid(reference_market(), pop, nt, nq);
    PdeOptions o;
    o.flow_quadrature = quadrature;
    const auto st = solve_mfg_fixed_point(reference_market(), pop, g, o);
    double e = 0.0;
    for (std::size_t n = 0; n < g.time_nodes(); ++n)
        e = std::max(e, std::abs(st.mean_inventory[n] - sol.E(g.t(n))));
    return e;
}

}  // namespace

TEST_CASE("mean inventory converges at first order under refinement") {
    const double coarse = fixed_point_error(500, 100, FlowQuadrature::upwind);
    const double mid = fixed_point_error(1000, 200, FlowQuadrature::upwind);
    const double fine = fixed_point_error(2000, 400, FlowQuadrature::upwind);
    CHECK(coarse / mid >= 2.0);
    CHECK(mid / fine >= 2.0);
}

TEST_CASE("midpoint flow quadrature also converges") {
    const double mid = fixed_point_error(1000, 200, FlowQuadrature::midpoint);
    const double fine = fixed_point_error(2000, 400, FlowQuadrature::midpoint);
    CHECK(fine < mid);
    CHECK(fine / 10.0 <= 0.02);
}

TEST_CASE("upwind flow is the time derivative of the transported mean") {
    const auto sol = solve_homogeneous(reference_market(), reference_pref());
    const PdeGrid g{1e-3, 1, -6.0, 18.0, 240};
    Field v(g.time_nodes(), g.q_nodes());
    for (std::size_t n = 0; n < g.time_nodes(); ++n)
        for (std::size_t i = 0; i < g.q_nodes(); ++i) v(n, i) = value_function(sol, 0.0, g.q(i));
    PdeOptions o;
    o.adaptive = false;
    const auto tr = solve_transport_forward(reference_market(), g, v, initial_density(g, 10.0, 0.5), o);
    const double slope = (tr.first_moment[1] - tr.first_moment[0]) / g.dt();
    CHECK(slope == doctest::Approx(type_flow(reference_market(), g, v, tr.m)[0]).epsilon(1e-9));
    CHECK(slope == doctest::Approx(sol.E_prime(0.0)).epsilon(0.01));
}

TEST_CASE("symmetric population at zero has no net flow") {
    const MarketParams m{0.4, 0.2, 0.0, 5.0};
    const auto pop = PopulationSpec::single({0.1, 2.5, 0.0}, 1.0);
    const auto g = default_pde_grid(m, pop, 1000, 200);
    CHECK(g.q_min == -g.q_max);
    PdeOptions o;
    o.tol = 1e-8;
    const auto st = solve_mfg_fixed_point(m, pop, g, o);
    for (double x : st.mu) CHECK(std::abs(x) <= 1e-6);
}

TEST_CASE("no permanent impact needs a single sweep") {
    const MarketParams m{0.0, 0.2, 0.0, 5.0};
    PopulationSpec pop;
    pop.types = {{0.5, {0.1, 2.5, 10.0}, 0.25}, {0.5, {0.3, 1.0, 5.0}, 0.25}};
    const auto g = default_pde_grid(m, pop, 500, 150);
    const auto st = solve_mfg_fixed_point(m, pop, g);
    CHECK(st.iterations == 1);
    CHECK(st.v.size() == 2);
    CHECK(st.m.size() == 2);
}

TEST_CASE("two types converge and conserve mass") {
    const MarketParams m{0.2, 0.2, 0.0, 5.0};
    PopulationSpec pop;
    pop.types = {{0.5, {0.1, std::sqrt(0.02), 6.0}, 0.25}, {0.5, {0.4, std::sqrt(0.08), 4.0}, 0.25}};
    const auto g = default_pde_grid(m, pop, 1000, 200);
    PdeOptions o;
    o.check_uniqueness = true;
    const auto st = solve_mfg_fixed_point(m, pop, g, o);
    CHECK(st.residual <= 2 * o.tol / o.damping);
    CHECK(st.max_mass_error <= 1e-6);
    CHECK(st.warnings.empty());
    for (std::size_t n = 0; n < g.time_nodes(); ++n)
        CHECK(st.mean_inventory[n] == doctest::Approx(0.5 * st.type_moments[0][n] + 0.5 * st.type_moments[1][n]));
}

TEST_CASE("field dump round trip") {
    Field f(3, 4);
    for (std::size_t i = 0; i < f.data.size(); ++i) f.data[i] = 0.1 * static_cast<double>(i) - 0.35;
    std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
    write_field(buf, f);
    CHECK(buf.str().size() == 8 + 16 + 12 * 8);
    CHECK(buf.str().substr(0, 8) == "CTFIELD1");
    const Field g = read_field(buf);
    CHECK(g.rows == 3);
    CHECK(g.cols == 4);
    CHECK(g.data == f.data);
    std::stringstream bad("NOTFIELD");
    CHECK_THROWS(read_field(bad));
}
