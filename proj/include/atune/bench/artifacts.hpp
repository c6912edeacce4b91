#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "atune/diagnostics.hpp"
#include "atune/sampler.hpp"
#include "atune/tuning.hpp"

namespace atune::bench {

/// Chain file layout (text): a '#' header line with the column names
///   iteration,accepted,divergent,delta_h,steps,stages,step_size,noise,grad,theta_1,...,theta_D
/// then one comma-separated row per iteration, doubles at 17 significant digits.
void write_chain_text(const std::filesystem::path& path, const ChainResult& chain);
ChainResult read_chain_text(const std::filesystem::path& path);

/// Binary columnar layout: magic "ATCHAIN1", uint64 N, uint64 D, then the
/// record columns and the D sample columns, each N little-endian values.
void write_chain_binary(const std::filesystem::path& path, const ChainResult& chain);
ChainResult read_chain_binary(const std::filesystem::path& path);

/// Dispatches on the extension (.bin is binary, anything else text).
ChainResult read_chain(const std::filesystem::path& path);
std::string chain_file_name(std::size_t chain, bool binary);

/// Chain files of a run directory (chains/chain_*.{csv,bin}) in chain order,
/// or the file itself when `path` is a file.
std::vector<std::filesystem::path> chain_files(const std::filesystem::path& path);

nlohmann::ordered_json to_json(const TuningReport& report);
TuningReport tuning_report_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const DiagnosticsReport& report);
DiagnosticsReport diagnostics_report_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const TrajectoryRule& rule);
TrajectoryRule trajectory_from_json(const nlohmann::json& j);

/// Writes `j.dump(2)` plus a newline; throws IoError on failure.
void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j);
nlohmann::json read_json(const std::filesystem::path& path);

/// Tab-separated table with a header row.
void write_table(const std::filesystem::path& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows);

/// Shortest round-trip decimal form of a double.
std::string format_double(double value);

}  // namespace atune::bench
