#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sactext/common/errors.hpp"
#include "sactext/harness/compare.hpp"
#include "sactext/harness/config.hpp"
#include "sactext/harness/records.hpp"
#include "sactext/harness/run.hpp"
#include "sactext/replay/replay.hpp"

namespace fs = std::filesystem;
using namespace sactext;

namespace {

constexpr int kConfigExit = 2;
constexpr int kAbortExit = 3;

struct RunArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string output;
  bool quiet = false;
  long log_every = 10;
  bool print_config = false;
};

int cmd_run(const RunArgs& a) {
  std::vector<std::string> overrides = a.overrides;
  if (!a.output.empty()) overrides.push_back("output_dir=\"" + a.output + "\"");
  harness::RunConfig cfg = a.config.empty() ? harness::resolve_config(nlohmann::json::object(), overrides)
                                            : harness::load_config(a.config, overrides);
  if (a.print_config) {
    std::cout << cfg.resolved.dump(2) << '\n';
    return 0;
  }
  harness::RunOptions opts;
  opts.log = a.quiet ? nullptr : &std::cerr;
  opts.log_every = a.log_every;
  auto result = harness::run(cfg, opts);
  const auto& last = result.records.back();
  std::cout << "run " << cfg.label() << " seed " << cfg.seed << ": " << last.env_steps << " steps, final success "
            << (last.success_rate ? harness::format_number(*last.success_rate) : "NA") << ", "
            << static_cast<long>(result.wall_seconds) << "s -> " << cfg.output_dir.string() << '\n';
  return 0;
}

int cmd_compare(const std::vector<std::string>& dirs, const std::string& output, int grid) {
  std::vector<harness::RunSeries> runs;
  for (const auto& d : dirs) runs.push_back(harness::load_run(d));
  auto c = harness::compare(runs, grid);
  if (!output.empty()) harness::write_comparison(c, output);
  std::cout << "horizon " << c.horizon << " env steps\n";
  std::cout << "rank  label                         runs  final mean +- std      auc mean +- std\n";
  for (const auto& g : c.groups) {
    std::cout << g.rank << "     " << g.label << std::string(g.label.size() < 30 ? 30 - g.label.size() : 1, ' ')
              << g.runs << "     " << (g.final_mean ? harness::format_number(*g.final_mean) : "NA") << " +- "
              << harness::format_number(g.final_std) << "    " << harness::format_number(g.auc_mean) << " +- "
              << harness::format_number(g.auc_std) << '\n';
  }
  return 0;
}

env::Playground make_world(const std::string& environment, const std::string& lexicon,
                           std::optional<bool> sequential) {
  auto cfg = harness::resolve_config({{"environment", environment}});
  env::EnvConfig e = cfg.env;
  if (sequential) e.include_sequential = *sequential;
  return env::Playground(lexicon.empty() ? env::Lexicon::standard() : env::Lexicon::load(lexicon), e);
}

int cmd_enumerate(const std::string& environment, const std::string& lexicon, std::optional<bool> sequential,
                  bool count_only, const std::string& type) {
  env::Playground world = make_world(environment, lexicon, sequential);
  std::optional<env::GoalKind> only;
  if (!type.empty()) only = env::parse_goal_kind(type);
  std::map<std::string, long> counts;
  long total = 0;
  for (const auto& g : world.goals()) {
    if (only && g.kind != *only) continue;
    ++counts[std::string(env::to_string(g.kind))];
    ++total;
    if (!count_only) std::cout << env::to_string(g.kind) << '\t' << world.goal_text(g) << '\n';
  }
  if (count_only) {
    for (const auto& [k, n] : counts) std::cout << k << '\t' << n << '\n';
    std::cout << "total\t" << total << '\n';
  }
  return 0;
}

int cmd_inspect(const std::string& file, const std::string& environment, const std::string& lexicon, bool as_json) {
  fs::path path(file);
  std::optional<env::Playground> world;
  fs::path run_config = path.parent_path() / "config.json";
  if (environment.empty() && fs::exists(run_config)) {
    auto cfg = harness::load_config(run_config);
    world.emplace(cfg.load_lexicon(), cfg.env);
  } else {
    world.emplace(make_world(environment.empty() ? "full" : environment, lexicon, std::nullopt));
  }
  std::size_t lines = 0;
  {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::string line;
    while (std::getline(in, line)) lines += line.empty() ? 0 : 1;
  }
  auto buffer = replay::ReplayBuffer::load(path, *world, std::max<std::size_t>(lines, 1));
  auto comp = buffer.composition();
  std::size_t terminal = 0, rewarded = 0;
  std::map<int, std::size_t> by_n;
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    const auto& t = buffer.at(i);
    terminal += t.terminal ? 1 : 0;
    rewarded += t.nstep_reward > 0.0 ? 1 : 0;
    ++by_n[t.effective_n];
  }
  auto frac = [&](std::size_t n) { return comp.size ? double(n) / double(comp.size) : 0.0; };

  nlohmann::ordered_json j;
  j["size"] = comp.size;
  j["hindsight"] = comp.hindsight;
  j["hindsight_fraction"] = comp.hindsight_fraction();
  for (std::size_t k = 0; k < env::kGoalKindCount; ++k) {
    j["goal_type_fraction"][std::string(env::to_string(static_cast<env::GoalKind>(k)))] =
        comp.goal_type_fraction(static_cast<env::GoalKind>(k));
  }
  j["terminal_fraction"] = frac(terminal);
  j["rewarded_fraction"] = frac(rewarded);
  for (const auto& [n, c] : by_n) j["effective_n"][std::to_string(n)] = c;

  if (as_json) {
    std::cout << j.dump(2) << '\n';
    return 0;
  }
  std::cout << "transitions        " << comp.size << '\n'
            << "hindsight          " << comp.hindsight << " (" << harness::format_number(comp.hindsight_fraction())
            << ")\n";
  for (const auto& [k, v] : j["goal_type_fraction"].items()) {
    std::cout << "goal type " << k << std::string(k.size() < 15 ? 15 - k.size() : 1, ' ')
              << harness::format_number(v.get<double>()) << '\n';
  }
  std::cout << "terminal fraction  " << harness::format_number(frac(terminal)) << '\n'
            << "rewarded fraction  " << harness::format_number(frac(rewarded)) << '\n';
  for (const auto& [n, c] : by_n) std::cout << "effective n = " << n << "    " << c << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text-world SAC/PPO experiment harness"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Train one agent and write metrics, summary and checkpoints");
  run->add_option("-c,--config", run_args.config, "JSON config file (defaults when omitted)");
  run->add_option("-s,--set", run_args.overrides, "Override a config key, e.g. sac.batch_size=64");
  run->add_option("-o,--output", run_args.output, "Output directory (same as output_dir=...)");
  run->add_flag("-q,--quiet", run_args.quiet, "No progress lines");
  run->add_option("--log-every", run_args.log_every, "Cycles between progress lines");
  run->add_flag("--print-config", run_args.print_config, "Print the resolved config and exit");

  std::vector<std::string> dirs;
  std::string compare_out;
  int grid = 200;
  auto* cmp = app.add_subcommand("compare", "Aggregate run directories across seeds");
  cmp->add_option("runs", dirs, "Run directories")->required()->check(CLI::ExistingDirectory);
  cmp->add_option("-o,--output", compare_out, "Write curves.csv, summary.csv and summary.json here");
  cmp->add_option("--grid", grid, "Points on the aligned step grid");

  std::string environment = "full", lexicon, type;
  std::optional<bool> sequential;
  bool count_only = false;
  auto* en = app.add_subcommand("enumerate-goals", "List the goal space");
  en->add_option("-e,--environment", environment, "full | simplified");
  en->add_option("--lexicon", lexicon, "Lexicon file")->check(CLI::ExistingFile);
  en->add_option("--sequential", sequential, "Override sequential goals (true | false)");
  en->add_option("--type", type, "Only this goal type");
  en->add_flag("--count", count_only, "Print counts per goal type");

  std::string buffer_file, buffer_env, buffer_lexicon;
  bool as_json = false;
  auto* ib = app.add_subcommand("inspect-buffer", "Composition of a dumped replay buffer");
  ib->add_option("file", buffer_file, "buffer.jsonl written by a run with dump_buffer")->required()->check(
      CLI::ExistingFile);
  ib->add_option("-e,--environment", buffer_env, "Environment preset when no config.json sits next to the file");
  ib->add_option("--lexicon", buffer_lexicon, "Lexicon file")->check(CLI::ExistingFile);
  ib->add_flag("--json", as_json, "JSON output");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_args);
    if (*cmp) return cmd_compare(dirs, compare_out, grid);
    if (*en) return cmd_enumerate(environment, lexicon, sequential, count_only, type);
    if (*ib) return cmd_inspect(buffer_file, buffer_env, buffer_lexicon, as_json);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const TrainingAbort& e) {
    std::cerr << "training aborted: " << e.what() << '\n';
    return kAbortExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
