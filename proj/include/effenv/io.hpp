// io.hpp: CSV and JSON serialization of series, grids and sweeps
//
// CSV files open with '#'-prefixed metadata lines (version, resolved config),
// then a header row, then one row per record. Numbers use %.17g; undefined
// values are written as empty fields.

#pragma once

#include "effenv/dynamics.hpp"
#include "effenv/experiments.hpp"

#include <json.hpp>

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace effenv {

std::string format_number(double v);

void write_metadata_lines(std::ostream& os, const nlohmann::json& config);

// Columns: j, k, rho00, re_rho10, im_rho10, stderr. Ensembles write "-" for k.
void write_series_csv(std::ostream& os, const EnsembleSeries& series, const nlohmann::json& config);
void write_trajectory_csv(std::ostream& os, const Trajectory& trajectory, const nlohmann::json& config);

// Columns: dt, detuning, rho00_star, is_freezing.
void write_attractor_csv(std::ostream& os, const std::vector<AttractorCell>& cells, const nlohmann::json& config);

// Columns: one per swept parameter, then the quantity.
void write_sweep_csv(std::ostream& os, const SweepConfig& sweep, const std::vector<SweepRow>& rows,
                     const nlohmann::json& config);

nlohmann::json series_to_json(const EnsembleSeries& series, const nlohmann::json& config, double wall_seconds);
nlohmann::json trajectory_to_json(const Trajectory& trajectory, const nlohmann::json& config, double wall_seconds);

// Throws std::runtime_error when the file cannot be written.
void write_text_file(const std::filesystem::path& path, const std::string& content);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);

}  // namespace effenv
