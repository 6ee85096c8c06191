#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sactext/common/metrics.hpp"

namespace sactext::harness {

/// A completed run read back from its directory.
struct RunSeries {
  std::filesystem::path dir;
  std::string label;
  std::uint64_t seed = 0;
  std::vector<CycleMetrics> records;
};

RunSeries load_run(const std::filesystem::path& dir);

struct CurvePoint {
  long env_steps = 0;
  double mean = 0.0;
  double std = 0.0;
};

struct GroupSummary {
  std::string label;
  int runs = 0;
  /// Mean over runs of the success rate covering the horizon; unset when every run has it missing.
  std::optional<double> final_mean;
  double final_std = 0.0;
  std::array<std::optional<double>, 4> final_by_type{};
  double auc_mean = 0.0;
  double auc_std = 0.0;
  /// 1 is best, by final mean success rate.
  int rank = 0;
  std::vector<CurvePoint> curve;
};

struct Comparison {
  /// Smallest final env_steps over all runs; every run is cut there.
  long horizon = 0;
  /// Ordered by rank.
  std::vector<GroupSummary> groups;
};

/// Groups runs by label and aligns them on environment steps. A record's success rate covers the
/// steps since the previous record; curves read that step function at `grid_points` + 1 evenly
/// spaced steps from 0 to the horizon.
/// Standard deviations are sample deviations across runs (0 for a single run).
Comparison compare(const std::vector<RunSeries>& runs, int grid_points = 200);

/// curves.csv, summary.csv and summary.json.
void write_comparison(const Comparison& comparison, const std::filesystem::path& out_dir);

}  // namespace sactext::harness
