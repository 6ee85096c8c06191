#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sactext/common/metrics.hpp"

namespace sactext::harness {

/// Column order of metrics.csv and key order of metrics.jsonl. Append-only.
const std::vector<std::string>& metrics_columns();

/// Shortest text that reads back to the same double. Non-finite values become "NA".
std::string format_number(double x);

std::string csv_header();
/// Missing values are written as NA.
std::string csv_row(const CycleMetrics& m);
/// Missing values are written as null.
nlohmann::ordered_json to_json(const CycleMetrics& m);

std::vector<CycleMetrics> read_metrics_csv(const std::filesystem::path& path);

}  // namespace sactext::harness
