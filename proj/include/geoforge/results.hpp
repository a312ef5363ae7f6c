#pragma once

#include "geoforge/executor.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace geoforge {

// Latest CellResult per (code, platform), stored as
// <results_dir>/<code>/<platform>.json. Log text lives in the workdir log
// files; the stored record carries their paths.
void save_cell_result(const std::filesystem::path& results_dir, const CellResult& cell);
std::vector<CellResult> load_cell_results(const std::filesystem::path& results_dir);

std::string cell_result_to_json(const CellResult& cell);
CellResult cell_result_from_json(const std::string& text, const std::string& origin);

} // namespace geoforge
