#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "sactext/common/errors.hpp"
#include "sactext/harness/compare.hpp"
#include "sactext/harness/config.hpp"
#include "sactext/harness/records.hpp"
#include "sactext/harness/run.hpp"

namespace py = pybind11;
using namespace sactext;
using nlohmann::json;

namespace {

// JSON crosses the boundary as text; the Python side parses it.
harness::RunConfig resolve(const std::string& config_json, const std::vector<std::string>& overrides) {
  return harness::resolve_config(json::parse(config_json), overrides);
}

std::string records_json(const std::vector<CycleMetrics>& records) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& r : records) out.push_back(harness::to_json(r));
  return out.dump();
}

env::Playground make_world(const std::string& environment) {
  const auto cfg = harness::resolve_config({{"environment", environment}});
  return env::Playground(cfg.load_lexicon(), cfg.env);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Discrete SAC for a text-rendered playground";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<TrainingAbort>(m, "TrainingAbort", PyExc_RuntimeError);

  m.def("resolve_config", [](const std::string& config_json, const std::vector<std::string>& overrides) {
    return resolve(config_json, overrides).resolved.dump();
  }, py::arg("config_json"), py::arg("overrides") = std::vector<std::string>{});

  m.def("run", [](const std::string& config_json, const std::vector<std::string>& overrides, bool write_files) {
    const auto cfg = resolve(config_json, overrides);
    harness::RunOptions opts;
    opts.write_files = write_files;
    harness::RunResult result;
    {
      py::gil_scoped_release release;
      result = harness::run(cfg, opts);
    }
    return py::make_tuple(records_json(result.records), result.wall_seconds);
  }, py::arg("config_json"), py::arg("overrides") = std::vector<std::string>{}, py::arg("write_files") = true);

  m.def("read_metrics", [](const std::filesystem::path& path) {
    return records_json(harness::read_metrics_csv(path));
  });

  m.def("compare", [](const std::vector<std::filesystem::path>& dirs, std::optional<std::filesystem::path> out_dir,
                      int grid) {
    std::vector<harness::RunSeries> runs;
    for (const auto& d : dirs) runs.push_back(harness::load_run(d));
    const auto c = harness::compare(runs, grid);
    if (out_dir) harness::write_comparison(c, *out_dir);
    json j;
    j["horizon"] = c.horizon;
    for (const auto& g : c.groups) {
      json row;
      row["label"] = g.label;
      row["runs"] = g.runs;
      row["rank"] = g.rank;
      row["final_mean"] = g.final_mean ? json(*g.final_mean) : json(nullptr);
      row["final_std"] = g.final_std;
      row["auc_mean"] = g.auc_mean;
      row["auc_std"] = g.auc_std;
      for (const auto& p : g.curve) row["curve"].push_back({p.env_steps, p.mean, p.std});
      j["groups"].push_back(row);
    }
    return j.dump();
  }, py::arg("run_dirs"), py::arg("out_dir") = std::nullopt, py::arg("grid") = 200);

  m.def("enumerate_goals", [](const std::string& environment) {
    const auto world = make_world(environment);
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& g : world.goals()) out.emplace_back(env::to_string(g.kind), world.goal_text(g));
    return out;
  }, py::arg("environment") = "full");

  m.def("uniform_random_success", [](const std::string& environment, long episodes, std::uint64_t seed) {
    return harness::uniform_random_success(make_world(environment), episodes, seed);
  }, py::arg("environment") = "simplified", py::arg("episodes") = 1000, py::arg("seed") = 0);
}
