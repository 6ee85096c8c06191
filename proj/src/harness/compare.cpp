#include "sactext/harness/compare.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "json.hpp"
#include "sactext/common/errors.hpp"
#include "sactext/harness/config.hpp"
#include "sactext/harness/records.hpp"
#include "sactext/harness/run.hpp"

namespace sactext::harness {

namespace {

struct Stats {
  double mean = 0.0;
  double std = 0.0;
};

Stats stats(const std::vector<double>& xs) {
  Stats s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

// The record whose interval contains `step`: the first one at or after it, else the last.
const CycleMetrics& covering(const std::vector<CycleMetrics>& records, long step) {
  auto it = std::lower_bound(records.begin(), records.end(), step,
                             [](const CycleMetrics& m, long s) { return m.env_steps < s; });
  return it == records.end() ? records.back() : *it;
}

std::string cell(const std::optional<double>& x) { return x ? format_number(*x) : "NA"; }

nlohmann::ordered_json nullable(const std::optional<double>& x) {
  return x ? nlohmann::ordered_json(*x) : nlohmann::ordered_json(nullptr);
}

}  // namespace

RunSeries load_run(const std::filesystem::path& dir) {
  RunConfig cfg = load_run_config(dir);
  RunSeries r;
  r.dir = dir;
  r.label = cfg.label();
  r.seed = cfg.seed;
  r.records = read_metrics_csv(dir / "metrics.csv");
  if (r.records.empty()) throw ConfigError(dir.string() + ": metrics.csv has no records");
  return r;
}

Comparison compare(const std::vector<RunSeries>& runs, int grid_points) {
  if (runs.empty()) throw ConfigError("compare: at least one run directory is required");
  if (grid_points < 1) throw ConfigError("compare: grid_points must be positive");
  Comparison out;
  out.horizon = std::numeric_limits<long>::max();
  for (const auto& r : runs) {
    if (r.records.empty()) throw ConfigError(r.dir.string() + ": no records");
    out.horizon = std::min(out.horizon, r.records.back().env_steps);
  }

  std::map<std::string, std::vector<const RunSeries*>> groups;
  for (const auto& r : runs) groups[r.label].push_back(&r);

  for (const auto& [label, members] : groups) {
    GroupSummary g;
    g.label = label;
    g.runs = static_cast<int>(members.size());

    std::vector<double> finals, aucs;
    std::array<std::vector<double>, 4> finals_by_type;
    for (const RunSeries* r : members) {
      const CycleMetrics& last = covering(r->records, out.horizon);
      if (last.success_rate) finals.push_back(*last.success_rate);
      for (std::size_t k = 0; k < finals_by_type.size(); ++k) {
        if (last.success_by_type[k]) finals_by_type[k].push_back(*last.success_by_type[k]);
      }
      aucs.push_back(area_under_curve(r->records, out.horizon));
    }
    if (!finals.empty()) {
      auto s = stats(finals);
      g.final_mean = s.mean;
      g.final_std = s.std;
    }
    for (std::size_t k = 0; k < finals_by_type.size(); ++k) {
      if (!finals_by_type[k].empty()) g.final_by_type[k] = stats(finals_by_type[k]).mean;
    }
    auto a = stats(aucs);
    g.auc_mean = a.mean;
    g.auc_std = a.std;

    for (int i = 0; i <= grid_points; ++i) {
      long step = out.horizon * i / grid_points;
      std::vector<double> ys;
      for (const RunSeries* r : members) {
        ys.push_back(covering(r->records, step).success_rate.value_or(0.0));
      }
      auto s = stats(ys);
      g.curve.push_back({step, s.mean, s.std});
    }
    out.groups.push_back(std::move(g));
  }

  std::stable_sort(out.groups.begin(), out.groups.end(), [](const GroupSummary& a, const GroupSummary& b) {
    double fa = a.final_mean.value_or(-1.0), fb = b.final_mean.value_or(-1.0);
    return fa > fb;
  });
  for (std::size_t i = 0; i < out.groups.size(); ++i) out.groups[i].rank = static_cast<int>(i) + 1;
  return out;
}

void write_comparison(const Comparison& c, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto open = [&](const char* name) {
    std::ofstream f(out_dir / name, std::ios::binary | std::ios::trunc);
    if (!f) throw ConfigError("cannot write " + (out_dir / name).string());
    return f;
  };

  auto curves = open("curves.csv");
  curves << "label,env_steps,mean_success_rate,std_success_rate\n";
  for (const auto& g : c.groups) {
    for (const auto& p : g.curve) {
      curves << g.label << ',' << p.env_steps << ',' << format_number(p.mean) << ',' << format_number(p.std) << '\n';
    }
  }

  auto summary = open("summary.csv");
  summary << "rank,label,runs,final_mean,final_std,auc_mean,auc_std\n";
  nlohmann::ordered_json doc;
  doc["horizon"] = c.horizon;
  doc["groups"] = nlohmann::ordered_json::array();
  for (const auto& g : c.groups) {
    summary << g.rank << ',' << g.label << ',' << g.runs << ',' << cell(g.final_mean) << ','
            << format_number(g.final_std) << ',' << format_number(g.auc_mean) << ',' << format_number(g.auc_std)
            << '\n';
    nlohmann::ordered_json by_type;
    for (std::size_t k = 0; k < g.final_by_type.size(); ++k) {
      by_type[std::string(env::to_string(static_cast<env::GoalKind>(k)))] = nullable(g.final_by_type[k]);
    }
    doc["groups"].push_back({{"rank", g.rank},
                             {"label", g.label},
                             {"runs", g.runs},
                             {"final_mean", nullable(g.final_mean)},
                             {"final_std", g.final_std},
                             {"auc_mean", g.auc_mean},
                             {"auc_std", g.auc_std},
                             {"final_by_goal_type", by_type}});
  }
  open("summary.json") << doc.dump(2) << '\n';
}

}  // namespace sactext::harness
