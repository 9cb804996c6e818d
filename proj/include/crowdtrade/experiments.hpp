#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace crowdtrade {

inline constexpr std::string_view kToolVersion = "0.1.0";

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitScenario = 2, kExitNumerical = 3 };

/// Round-trip decimal text (17 significant digits, locale independent).
std::string format_double(double value);

/// Writes `content` to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Accumulates a CSV table with a header row and '\n' line endings.
class CsvWriter {
public:
    explicit CsvWriter(const std::vector<std::string>& header);

    CsvWriter& cell(double value);
    CsvWriter& cell(std::optional<double> value);  ///< blank when empty
    CsvWriter& cell(std::size_t value);
    CsvWriter& cell(std::string_view text);
    void end_row();

    const std::string& str() const noexcept { return text_; }

private:
    void separator();

    std::string text_;
    std::size_t columns_;
    std::size_t in_row_ = 0;
};

/// Inclusive, evenly spaced sweep axis.
struct SweepRange {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 1;

    std::vector<double> values() const;
};

/// Everything that determines one command's outputs.
struct RunOptions {
    std::string command;
    std::string scenario_source;
    std::string scenario_text;
    std::filesystem::path out_dir = ".";

    std::optional<std::size_t> grid_n;
    std::optional<std::uint64_t> seed;
    std::optional<double> tol;
    std::optional<std::size_t> max_iter;
    std::optional<double> damping;

    std::optional<std::string> method;
    std::optional<std::size_t> rounds;
    std::optional<double> noise;
    std::optional<std::size_t> pde_time_steps;
    std::optional<std::size_t> pde_q_intervals;
    bool dump_fields = false;
    bool check_uniqueness = false;
    std::optional<std::size_t> paths;
    std::optional<std::size_t> steps;
    std::optional<double> S0;
    bool deviation = false;
    bool dump_paths = false;

    SweepRange sweep_alpha{0.01, 0.5, 50};
    SweepRange sweep_kappa{0.1, 2.0, 50};
    SweepRange sweep_phi{0.01, 1.0, 5};
    double sweep_A = 2.5;
    double sweep_T = 5.0;
    double sweep_E0 = 10.0;
};

nlohmann::json options_to_json(const RunOptions& options);
RunOptions options_from_json(const nlohmann::json& j);

struct RunResult {
    std::vector<std::filesystem::path> outputs;
    std::filesystem::path manifest;
    nlohmann::json results;
};

/**
 * Runs one command (closed-form, hetero, learn, pde, simulate, sweep-tm),
 * writes its CSV files into options.out_dir and then a `manifest.json` that
 * echoes the scenario, the options, the outputs and headline results.
 * Library errors propagate unchanged.
 */
RunResult run_command(const RunOptions& options);

/// Options recorded in a manifest, retargeted to `out_dir`.
RunOptions options_from_manifest(const std::filesystem::path& manifest,
                                 const std::filesystem::path& out_dir);

}  // namespace crowdtrade
