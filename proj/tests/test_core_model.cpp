#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "crowdtrade/core_model.hpp"
#include "crowdtrade/errors.hpp"

using namespace crowdtrade;

namespace {

bool mentions(const ValidationReport& r, const std::string& text) {
    for (const auto& v : r.violations)
        if (v.find(text) != std::string::npos) return true;
    return false;
}

}  // namespace

TEST_CASE("zero kappa is reported") {
    const MarketParams m{0.1, 0.0, 0.0, 1.0};
    const auto r = validate_scenario(m, PopulationSpec::single({0.1, 1.0, 1.0}));
    CHECK_FALSE(r.ok());
    CHECK(mentions(r, "kappa must be strictly positive"));
}

TEST_CASE("two equally weighted valid types give an empty report") {
    PopulationSpec pop;
    pop.types = {{0.5, {0.1, 1.0, 3.0}, 0.0}, {0.5, {0.2, 0.5, -1.0}, 0.0}};
    const auto r = validate_scenario({0.1, 0.2, 0.3, 2.0}, pop);
    CHECK(r.ok());
    CHECK(r.violations.empty());
}

TEST_CASE("hetero eligibility is flagged without failing validation") {
    const MarketParams m{0.4, 0.2, 0.0, 5.0};
    const auto r = validate_scenario(m, PopulationSpec::single({0.1, 2.5, 10.0}));
    CHECK(r.ok());
    REQUIRE(r.hetero.size() == 1);
    CHECK_FALSE(r.hetero_eligible());
    CHECK(r.hetero[0].required_A == doctest::Approx(0.1414213562373095).epsilon(1e-15));
    CHECK_THROWS_AS(require_hetero_eligible(m, PopulationSpec::single({0.1, 2.5, 10.0})),
                    ScenarioError);
    CHECK_NOTHROW(require_hetero_eligible(m, PopulationSpec::single({0.1, std::sqrt(0.02), 10.0})));
}

TEST_CASE("parameter invariants are enforced") {
    const Preference good{0.1, 1.0, 1.0};
    CHECK_FALSE(validate_scenario({0.1, 1.0, -0.1, 1.0}, PopulationSpec::single(good)).ok());
    CHECK_FALSE(validate_scenario({0.1, 1.0, 0.0, 0.0}, PopulationSpec::single(good)).ok());
    CHECK_FALSE(validate_scenario({NAN, 1.0, 0.0, 1.0}, PopulationSpec::single(good)).ok());
    CHECK_FALSE(validate_scenario({0.1, 1.0, 0.0, 1.0}, PopulationSpec::single({-0.1, 1.0, 1.0})).ok());
    CHECK_FALSE(validate_scenario({0.1, 1.0, 0.0, 1.0}, PopulationSpec::single({0.1, -1.0, 1.0})).ok());
    CHECK_FALSE(validate_scenario({0.1, 1.0, 0.0, 1.0}, PopulationSpec::single(good, -1.0)).ok());
    CHECK_FALSE(validate_scenario({0.1, 1.0, 0.0, 1.0}, PopulationSpec{}).ok());

    PopulationSpec bad_weights;
    bad_weights.types = {{0.5, good, 0.0}, {0.4, good, 0.0}};
    CHECK_FALSE(validate_scenario({0.1, 1.0, 0.0, 1.0}, bad_weights).ok());
    bad_weights.types = {{1.2, good, 0.0}, {-0.2, good, 0.0}};
    CHECK_FALSE(validate_scenario({0.1, 1.0, 0.0, 1.0}, bad_weights).ok());
    CHECK_THROWS_AS(require_valid({0.1, 0.0, 0.0, 1.0}, PopulationSpec::single(good)), ScenarioError);
}

TEST_CASE("validation is pure") {
    PopulationSpec pop;
    pop.types = {{0.3, {0.1, 2.0, 3.0}, 0.0}, {0.7, {0.2, 0.5, -1.0}, 0.5}};
    const MarketParams m{0.2, 0.0, 0.1, 1.0};
    const auto a = validate_scenario(m, pop);
    const auto b = validate_scenario(m, pop);
    CHECK(a.violations == b.violations);
    CHECK(a.describe() == b.describe());
}

TEST_CASE("time grid nodes use i*T/N") {
    const TimeGrid g(7.3, 1000);
    CHECK(g.size() == 1001);
    CHECK(g.node(0) == 0.0);
    CHECK(g.node(1000) == 7.3);
    for (std::size_t i = 0; i < 1000; ++i)
        CHECK(std::abs((g.node(i + 1) - g.node(i)) - g.dt()) <= 4 * std::abs(std::nextafter(7.3, 8.0) - 7.3));
    CHECK(g.node(377) == 377.0 * 7.3 / 1000.0);
    CHECK_THROWS(TimeGrid(1.0, 1));
    CHECK_THROWS(TimeGrid(0.0, 10));
}

TEST_CASE("linear interpolation") {
    const TimeGrid g(2.0, 4);
    const std::vector<double> s{0.3, -1.0, 4.0, 2.5, 7.0};
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(linear_interp(g, s, g.node(i)) == s[i]);

    const std::vector<double> c(5, 3.25);
    for (double t : {0.0, 0.1, 0.77, 1.5, 2.0}) CHECK(linear_interp(g, c, t) == doctest::Approx(3.25));

    const TimeGrid unit(1.0, 2);
    const std::vector<double> lin{0.0, 0.5, 1.0};
    CHECK(linear_interp(unit, lin, 0.25) == doctest::Approx(0.25));

    CHECK_THROWS_AS(linear_interp(g, s, -0.1), std::out_of_range);
    CHECK_THROWS_AS(linear_interp(g, s, 2.1), std::out_of_range);
    CHECK_THROWS_AS(linear_interp(g, std::vector<double>{1.0, 2.0}, 1.0), std::invalid_argument);
}
