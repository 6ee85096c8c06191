#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "sactext/critic/critic.hpp"
#include "sactext/env/playground.hpp"
#include "sactext/policy/prior.hpp"
#include "sactext/policy/scorer.hpp"
#include "sactext/ppo/ppo.hpp"
#include "sactext/sac/sac.hpp"

namespace sactext::harness {

enum class Algorithm { sac, sac_her, ppo_clip, ppo_kl };
std::string_view to_string(Algorithm a);
Algorithm parse_algorithm(std::string_view name);
inline bool is_sac(Algorithm a) { return a == Algorithm::sac || a == Algorithm::sac_her; }

/// A fully resolved experiment description.
struct RunConfig {
  /// Exactly what gets echoed to config.json.
  nlohmann::json resolved;

  std::string environment;
  Algorithm algorithm = Algorithm::sac;
  ppo::HerMode her_mode = ppo::HerMode::off;
  int num_envs = 32;
  long total_steps = 400000;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  int threads = 1;
  /// Environment steps between checkpoints; 0 keeps only the final one.
  long checkpoint_interval = 0;
  bool dump_buffer = false;
  std::optional<std::filesystem::path> lexicon;

  env::EnvConfig env;
  policy::ScorerConfig scorer;
  critic::CriticConfig critic;
  sac::SacConfig sac;
  ppo::PpoConfig ppo;

  env::Lexicon load_lexicon() const;
  /// Label used to group runs in compare: the algorithm, plus the HER mode for PPO.
  std::string label() const;
};

/// Defaults for an algorithm on an environment preset (full | simplified).
nlohmann::json default_config(Algorithm algorithm, std::string_view environment);

/// Applies `key.path=value` to a JSON object. The value is parsed as JSON when it parses and
/// taken as a string otherwise.
void apply_override(nlohmann::json& doc, std::string_view assignment);

/// Merges `user` over the defaults for its algorithm and environment and checks every key and
/// type. Throws ConfigError naming the offending field.
RunConfig resolve_config(nlohmann::json user, const std::vector<std::string>& overrides = {});
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
/// Reads a config.json echoed by a run.
RunConfig load_run_config(const std::filesystem::path& run_dir);

}  // namespace sactext::harness
