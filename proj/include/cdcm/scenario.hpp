/**
 * @file scenario.hpp
 * @brief Scenario files and the commands behind the cdcm_sim executable
 *
 * A scenario is a JSON document. Every command writes a sorted-key JSON report
 * plus CSV files named `<scenario name>_<metric>.csv` into the output
 * directory; identical inputs give byte-identical files.
 */
#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace cdcm {

struct RunOptions {
    std::optional<std::uint64_t> seed;          ///< overrides the scenario seed
    std::optional<double> resolution_fs;        ///< overrides the scenario time resolution
    std::filesystem::path out_dir = ".";
};

struct CommandResult {
    nlohmann::json report;
    std::vector<std::string> files;      ///< written, relative to out_dir
    std::vector<std::string> failed_checks;  ///< `expect` entries that did not hold
};

/// `n,q_max,e_max` for n = 3..n_max.
void cmd_efficiency(std::ostream& os, unsigned n_max);

/// Codebook conformance vectors of a scheme (see parse_scheme for names).
void cmd_vectors(std::ostream& os, const std::string& scheme, bool negative_polarity = false);

/// Link scenario: BER test plus recovered-clock metrics, or a duty-setting sweep.
CommandResult cmd_roundtrip(const std::filesystem::path& file, const RunOptions& opt);
CommandResult cmd_topology(const std::filesystem::path& file, const RunOptions& opt);
CommandResult cmd_eye(const std::filesystem::path& file, const RunOptions& opt);

/// Same commands on an already-loaded document.
CommandResult run_roundtrip(const nlohmann::json& doc, const RunOptions& opt);
CommandResult run_topology_scenario(const nlohmann::json& doc, const RunOptions& opt);
CommandResult run_eye(const nlohmann::json& doc, const RunOptions& opt);

/// Reads a scenario file; syntax errors name line and column, an empty file is rejected.
nlohmann::json load_scenario(const std::filesystem::path& file);

}  // namespace cdcm
