#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "sactext/common/metrics.hpp"
#include "sactext/harness/config.hpp"
#include "sactext/replay/replay.hpp"

namespace sactext::harness {

struct RunOptions {
  /// Progress lines go here when set.
  std::ostream* log = nullptr;
  /// Cycles between progress lines.
  long log_every = 10;
  /// When false nothing is written to disk.
  bool write_files = true;
};

struct RunResult {
  std::vector<CycleMetrics> records;
  double wall_seconds = 0.0;
  /// SAC only: buffer composition after the last cycle.
  std::optional<replay::Composition> buffer;
};

/// Runs the configured trainer until total_steps environment steps have been collected.
///
/// Files in output_dir: config.json, vocab.txt, metrics.csv, metrics.jsonl, timing.csv,
/// summary.json, goal_types.csv, checkpoints/, and buffer.jsonl when dump_buffer is set.
/// Throws TrainingAbort after writing abort.txt when training produces non-finite values.
RunResult run(const RunConfig& config, const RunOptions& options = {});

/// Success rate of the policy that picks uniformly among the valid actions, over `episodes`
/// episodes of freshly drawn goals and scenes.
double uniform_random_success(const env::Playground& world, long episodes, std::uint64_t seed);

/// Mean success over [0, horizon], where each record's success rate covers the steps since the
/// previous record. Missing rates count as 0, as does any stretch past the last record.
double area_under_curve(std::span<const CycleMetrics> records, long horizon);

}  // namespace sactext::harness
