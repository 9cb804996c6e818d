#include "crowdtrade/scenario.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "crowdtrade/errors.hpp"

namespace crowdtrade {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

class Parser {
public:
    Parser(const std::string& source) : source_(source) {}

    [[noreturn]] void fail(std::size_t line, const std::string& message) const {
        throw ScenarioError(source_ + ":" + std::to_string(line) + ": " + message);
    }

    double number(std::size_t line, const std::string& key, const std::string& value) const {
        double out = 0.0;
        const char* end = value.data() + value.size();
        const auto [ptr, ec] = std::from_chars(value.data(), end, out);
        if (ec != std::errc{} || ptr != end || !std::isfinite(out))
            fail(line, "'" + key + "' expects a finite number, got '" + value + "'");
        return out;
    }

    std::uint64_t integer(std::size_t line, const std::string& key, const std::string& value) const {
        std::uint64_t out = 0;
        const char* end = value.data() + value.size();
        const auto [ptr, ec] = std::from_chars(value.data(), end, out);
        if (ec != std::errc{} || ptr != end)
            fail(line, "'" + key + "' expects a nonnegative integer, got '" + value + "'");
        return out;
    }

    bool boolean(std::size_t line, const std::string& key, const std::string& value) const {
        if (value == "true" || value == "1" || value == "yes") return true;
        if (value == "false" || value == "0" || value == "no") return false;
        fail(line, "'" + key + "' expects true or false, got '" + value + "'");
    }

private:
    std::string source_;
};

struct PendingType {
    std::size_t line = 0;
    PopulationType type;
    bool matched_A = false;
    bool has_A = false;
    double learning_c = 1.0;
};

}  // namespace

Scenario parse_scenario(const std::string& text, const std::string& source) {
    Parser p(source);
    Scenario sc;
    sc.text = text;

    std::map<std::size_t, PendingType> types;
    std::string section;
    std::size_t type_index = 0;
    std::map<std::string, std::size_t> seen;  // "section/key" -> line
    std::set<std::string> sections;

    std::istringstream in(text);
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const auto comment = raw.find_first_of("#;");
        const std::string content = trim(comment == std::string::npos ? raw : raw.substr(0, comment));
        if (content.empty()) continue;

        if (content.front() == '[') {
            if (content.back() != ']') p.fail(line, "unterminated section header");
            section = trim(content.substr(1, content.size() - 2));
            if (!sections.insert(section).second) p.fail(line, "duplicate section [" + section + "]");
            if (section.rfind("population.", 0) == 0) {
                const std::string idx = section.substr(11);
                type_index = p.integer(line, "population index", idx);
                types[type_index].line = line;
            } else if (section != "market" && section != "grid" && section != "solver") {
                p.fail(line, "unknown section [" + section + "]");
            }
            continue;
        }

        const auto eq = content.find('=');
        if (eq == std::string::npos) p.fail(line, "expected 'key = value'");
        const std::string key = trim(content.substr(0, eq));
        const std::string value = trim(content.substr(eq + 1));
        if (section.empty()) p.fail(line, "key '" + key + "' outside any section");
        if (key.empty() || value.empty()) p.fail(line, "empty key or value");
        const std::string slot = section + "/" + key;
        if (const auto it = seen.find(slot); it != seen.end())
            p.fail(line, "duplicate key '" + key + "' (first set on line " +
                             std::to_string(it->second) + ")");
        seen[slot] = line;

        if (section == "market") {
            auto& m = sc.market;
            if (key == "alpha") m.alpha = p.number(line, key, value);
            else if (key == "kappa") m.kappa = p.number(line, key, value);
            else if (key == "sigma") m.sigma = p.number(line, key, value);
            else if (key == "T") m.T = p.number(line, key, value);
            else p.fail(line, "unknown key '" + key + "' in [market]");
        } else if (section == "grid") {
            auto& g = sc.grid;
            if (key == "N") g.N = p.integer(line, key, value);
            else if (key == "pde_time_steps") g.pde_time_steps = p.integer(line, key, value);
            else if (key == "pde_q_intervals") g.pde_q_intervals = p.integer(line, key, value);
            else if (key == "q_min") g.q_min = p.number(line, key, value);
            else if (key == "q_max") g.q_max = p.number(line, key, value);
            else p.fail(line, "unknown key '" + key + "' in [grid]");
        } else if (section == "solver") {
            auto& s = sc.solver;
            if (key == "method") {
                if (value != "direct" && value != "picard")
                    p.fail(line, "method must be 'direct' or 'picard'");
                s.method = value;
            } else if (key == "tol") s.tol = p.number(line, key, value);
            else if (key == "max_iter") s.max_iter = p.integer(line, key, value);
            else if (key == "damping") s.damping = p.number(line, key, value);
            else if (key == "pde_tol") s.pde_tol = p.number(line, key, value);
            else if (key == "pde_max_iter") s.pde_max_iter = p.integer(line, key, value);
            else if (key == "pde_damping") s.pde_damping = p.number(line, key, value);
            else if (key == "seed") s.seed = p.integer(line, key, value);
            else if (key == "rounds") s.rounds = p.integer(line, key, value);
            else if (key == "noise") s.noise = p.number(line, key, value);
            else if (key == "bound_C") s.bound_C = p.number(line, key, value);
            else if (key == "paths") s.paths = p.integer(line, key, value);
            else if (key == "steps") s.steps = p.integer(line, key, value);
            else if (key == "S0") s.S0 = p.number(line, key, value);
            else if (key == "representative") s.representative = p.boolean(line, key, value);
            else if (key == "agents_per_type") s.agents_per_type = p.integer(line, key, value);
            else p.fail(line, "unknown key '" + key + "' in [solver]");
        } else {
            PendingType& t = types[type_index];
            if (key == "weight") t.type.weight = p.number(line, key, value);
            else if (key == "phi") t.type.pref.phi = p.number(line, key, value);
            else if (key == "A") {
                t.has_A = true;
                if (value == "matched") t.matched_A = true;
                else t.type.pref.A = p.number(line, key, value);
            } else if (key == "E0") t.type.pref.E0 = p.number(line, key, value);
            else if (key == "stdev") t.type.init_stdev = p.number(line, key, value);
            else if (key == "learning_c") t.learning_c = p.number(line, key, value);
            else p.fail(line, "unknown key '" + key + "' in [" + section + "]");
        }
    }

    if (types.empty()) p.fail(line, "no [population.k] section");
    std::size_t expected = 0;
    for (auto& [index, t] : types) {
        if (index != expected)
            p.fail(t.line, "population sections must be numbered 0.." +
                               std::to_string(types.size() - 1) + " without gaps");
        ++expected;
        if (!t.has_A) p.fail(t.line, "population." + std::to_string(index) + " is missing 'A'");
        if (t.matched_A) {
            if (t.type.pref.phi < 0.0 || sc.market.kappa <= 0.0)
                p.fail(t.line, "'A = matched' needs phi >= 0 and kappa > 0");
            t.type.pref.A = std::sqrt(t.type.pref.phi * sc.market.kappa);
        }
        sc.population.types.push_back(t.type);
        sc.learning_constants.push_back(t.learning_c);
    }
    if (sc.grid.N < 2) p.fail(seen.count("grid/N") ? seen["grid/N"] : line, "grid N must be at least 2");
    return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ScenarioError("cannot open scenario file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str(), path.string());
}

}  // namespace crowdtrade
