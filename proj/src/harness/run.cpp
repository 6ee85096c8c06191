#include "sactext/harness/run.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>

#include "sactext/common/errors.hpp"
#include "sactext/env/vec_env.hpp"
#include "sactext/harness/records.hpp"
#include "sactext/ppo/ppo.hpp"
#include "sactext/sac/sac.hpp"

namespace sactext::harness {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

struct Writers {
  std::ofstream csv;
  std::ofstream jsonl;
  std::ofstream timing;
};

nlohmann::ordered_json nullable(const std::optional<double>& x) {
  return x ? nlohmann::ordered_json(*x) : nlohmann::ordered_json(nullptr);
}

void write_summary(const RunConfig& cfg, const env::Playground& world, const RunResult& result) {
  const CycleMetrics& last = result.records.back();
  auto proportions = env::goal_kind_proportions(world.goals());

  nlohmann::ordered_json table = nlohmann::ordered_json::array();
  std::ofstream types = open_out(cfg.output_dir / "goal_types.csv");
  types << "goal_type,goal_space_share,success_rate\n";
  for (std::size_t k = 0; k < env::kGoalKindCount; ++k) {
    std::string name(env::to_string(static_cast<env::GoalKind>(k)));
    const auto& rate = last.success_by_type[k];
    table.push_back({{"goal_type", name}, {"goal_space_share", proportions[k]}, {"success_rate", nullable(rate)}});
    types << name << ',' << format_number(proportions[k]) << ',' << (rate ? format_number(*rate) : "NA") << '\n';
  }

  nlohmann::ordered_json s;
  s["label"] = cfg.label();
  s["algorithm"] = std::string(to_string(cfg.algorithm));
  s["environment"] = cfg.environment;
  s["seed"] = cfg.seed;
  s["goal_space_size"] = world.goals().size();
  s["cycles"] = result.records.size();
  s["env_steps"] = last.env_steps;
  s["episodes"] = last.episodes;
  s["updates"] = last.updates;
  s["final_success_rate"] = nullable(last.success_rate);
  s["area_under_success_curve"] = area_under_curve(result.records, last.env_steps);
  s["success_by_goal_type"] = table;
  s["final_record"] = to_json(last);
  std::ofstream out = open_out(cfg.output_dir / "summary.json");
  out << s.dump(2) << '\n';
}

template <class Trainer, class Checkpoint>
RunResult drive(Trainer& trainer, const RunConfig& cfg, const RunOptions& opts, Writers* w,
                const Checkpoint& checkpoint) {
  RunResult result;
  const auto start = std::chrono::steady_clock::now();
  long next_checkpoint = cfg.checkpoint_interval > 0 ? cfg.checkpoint_interval : -1;
  while (trainer.env_steps() < cfg.total_steps) {
    CycleMetrics m = trainer.run_cycle();
    double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (w) {
      w->csv << csv_row(m) << '\n' << std::flush;
      w->jsonl << to_json(m).dump() << '\n' << std::flush;
      w->timing << m.cycle << ',' << m.env_steps << ',' << format_number(elapsed) << '\n';
      while (next_checkpoint > 0 && m.env_steps >= next_checkpoint) {
        checkpoint("step_" + std::to_string(m.env_steps));
        next_checkpoint += cfg.checkpoint_interval;
      }
    }
    if (opts.log && opts.log_every > 0 && m.cycle % opts.log_every == 0) {
      auto show = [](const std::optional<double>& x) { return x ? format_number(*x) : std::string("NA"); };
      *opts.log << "[" << cfg.label() << " seed " << cfg.seed << "] steps " << m.env_steps << " success "
                << show(m.success_rate) << " entropy " << show(m.entropy) << " t " << static_cast<long>(elapsed)
                << "s\n";
    }
    result.records.push_back(m);
  }
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (w) checkpoint("final");
  return result;
}

}  // namespace

double area_under_curve(std::span<const CycleMetrics> records, long horizon) {
  if (horizon <= 0) return 0.0;
  double area = 0.0;
  long from = 0;
  for (const auto& r : records) {
    if (from >= horizon) break;
    long to = std::min(r.env_steps, horizon);
    area += r.success_rate.value_or(0.0) * static_cast<double>(to - from);
    from = r.env_steps;
  }
  return area / static_cast<double>(horizon);
}

double uniform_random_success(const env::Playground& world, long episodes, std::uint64_t seed) {
  env::EnvInstance instance(world, derive_seed(seed, 0));
  Rng rng(derive_seed(seed, 1));
  long done = 0, successes = 0;
  while (done < episodes) {
    auto outcome = instance.step(static_cast<int>(rng.index(instance.actions().size())));
    if (outcome.episode) {
      ++done;
      successes += outcome.episode->success ? 1 : 0;
    }
  }
  return static_cast<double>(successes) / static_cast<double>(episodes);
}

RunResult run(const RunConfig& cfg, const RunOptions& opts) {
  const env::Playground world(cfg.load_lexicon(), cfg.env);
  std::optional<Writers> writers;
  if (opts.write_files) {
    fs::create_directories(cfg.output_dir / "checkpoints");
    open_out(cfg.output_dir / "config.json") << cfg.resolved.dump(2) << '\n';
    open_out(cfg.output_dir / "vocab.txt") << policy::Tokenizer::for_lexicon(world.lexicon()).serialize();
    fs::remove(cfg.output_dir / "abort.txt");
    writers.emplace();
    writers->csv = open_out(cfg.output_dir / "metrics.csv");
    writers->jsonl = open_out(cfg.output_dir / "metrics.jsonl");
    writers->timing = open_out(cfg.output_dir / "timing.csv");
    writers->csv << csv_header() << '\n';
    writers->timing << "cycle,env_steps,wall_seconds\n";
  }
  Writers* w = writers ? &*writers : nullptr;
  auto checkpoint_dir = [&](const std::string& name) {
    fs::path dir = cfg.output_dir / "checkpoints" / name;
    fs::create_directories(dir);
    return dir;
  };

  RunResult result;
  try {
    if (is_sac(cfg.algorithm)) {
      sac::SacConfig sc = cfg.sac;
      auto& target = sc.sampling.goal_type_target;
      if (std::all_of(target.begin(), target.end(), [](double p) { return p == 0.0; })) {
        auto props = env::goal_kind_proportions(world.goals());
        std::copy(props.begin(), props.end(), target.begin());
      }
      sac::SacTrainer trainer(world, sc, cfg.scorer, cfg.critic, cfg.num_envs, cfg.seed);
      result = drive(trainer, cfg, opts, w, [&](const std::string& name) {
        fs::path dir = checkpoint_dir(name);
        trainer.agent().store().save(dir / "model.params");
        trainer.agent().target_store().save(dir / "target.params");
        trainer.agent().alpha_store().save(dir / "alpha.params");
      });
      result.buffer = trainer.buffer().composition();
      if (w && cfg.dump_buffer) trainer.buffer().dump(cfg.output_dir / "buffer.jsonl", world);
    } else {
      ppo::PpoTrainer trainer(world, cfg.ppo, cfg.scorer, cfg.num_envs, cfg.seed);
      result = drive(trainer, cfg, opts, w, [&](const std::string& name) {
        trainer.agent().store().save(checkpoint_dir(name) / "model.params");
      });
    }
  } catch (const TrainingAbort& e) {
    if (w) open_out(cfg.output_dir / "abort.txt") << e.what() << '\n';
    throw;
  }
  if (w && !result.records.empty()) write_summary(cfg, world, result);
  return result;
}

}  // namespace sactext::harness
