#include "sactext/harness/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "sactext/common/errors.hpp"

namespace sactext::harness {

using nlohmann::json;

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::sac: return "sac";
    case Algorithm::sac_her: return "sac_her";
    case Algorithm::ppo_clip: return "ppo_clip";
    case Algorithm::ppo_kl: return "ppo_kl";
  }
  return "?";
}

Algorithm parse_algorithm(std::string_view name) {
  for (auto a : {Algorithm::sac, Algorithm::sac_her, Algorithm::ppo_clip, Algorithm::ppo_kl}) {
    if (to_string(a) == name) return a;
  }
  throw ConfigError("algorithm: unknown value '" + std::string(name) + "' (sac | sac_her | ppo_clip | ppo_kl)");
}

env::Lexicon RunConfig::load_lexicon() const {
  return lexicon ? env::Lexicon::load(*lexicon) : env::Lexicon::standard();
}

std::string RunConfig::label() const {
  std::string s(to_string(algorithm));
  if (!is_sac(algorithm) && her_mode != ppo::HerMode::off) s += "+" + std::string(ppo::to_string(her_mode));
  return s;
}

namespace {

env::EnvConfig preset(std::string_view environment) {
  if (environment == "full") return env::EnvConfig{};
  if (environment == "simplified") return env::EnvConfig::simplified();
  throw ConfigError("environment: unknown preset '" + std::string(environment) + "' (full | simplified)");
}

// Keys whose value may be null on top of the default's type.
bool nullable(const std::string& path) { return path == "lexicon" || path == "sac.goal_type_prior"; }

std::string type_name(const json& v) {
  if (v.is_null()) return "null";
  if (v.is_boolean()) return "boolean";
  if (v.is_number_integer()) return "integer";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  return "object";
}

bool integral(const json& v) {
  if (v.is_number_integer()) return true;
  if (!v.is_number_float()) return false;
  double x = v.get<double>();
  return std::isfinite(x) && std::floor(x) == x && std::fabs(x) < 9.0e15;
}

void check_type(const json& def, const json& v, const std::string& path) {
  if (v.is_null() && nullable(path)) return;
  if (path == "sac.entropy_coefficient") {
    if ((v.is_string() && v.get<std::string>() == "auto") || v.is_number()) return;
    throw ConfigError(path + ": expected \"auto\" or a number, got " + type_name(v));
  }
  bool ok = false;
  std::string want;
  if (def.is_boolean()) {
    ok = v.is_boolean();
    want = "boolean";
  } else if (def.is_number_integer()) {
    ok = integral(v);
    want = "integer";
  } else if (def.is_number()) {
    ok = v.is_number();
    want = "number";
  } else if (def.is_string() || (def.is_null() && path == "lexicon")) {
    ok = v.is_string();
    want = "string";
  } else if (def.is_array() || (def.is_null() && path == "sac.goal_type_prior")) {
    ok = v.is_array();
    want = "array";
    if (ok) {
      for (const auto& x : v) ok = ok && x.is_number();
    }
  }
  if (!ok) throw ConfigError(path + ": expected " + want + ", got " + type_name(v));
}

void merge(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) {
    throw ConfigError((path.empty() ? std::string("config") : path) + ": expected an object");
  }
  for (const auto& [key, value] : user.items()) {
    std::string p = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError(p + ": unknown key");
    json& slot = base[key];
    if (slot.is_object()) {
      merge(slot, value, p);
    } else {
      check_type(slot, value, p);
      slot = (slot.is_number_integer() && value.is_number_float()) ? json(static_cast<long long>(value.get<double>()))
                                                                     : value;
    }
  }
}

template <class T>
T positive(const json& doc, const char* key, const std::string& path) {
  T x = doc.at(key).get<T>();
  if (!(x > 0)) throw ConfigError(path + "." + key + ": must be positive");
  return x;
}

std::string require_adam(const json& block, const std::string& path) {
  auto name = block.at("optimizer").get<std::string>();
  if (name != "adam") throw ConfigError(path + ".optimizer: only \"adam\" is supported, got '" + name + "'");
  return name;
}

}  // namespace

json default_config(Algorithm algorithm, std::string_view environment) {
  env::EnvConfig e = preset(environment);
  json doc = {
      {"environment", std::string(environment)},
      {"algorithm", std::string(to_string(algorithm))},
      {"her_mode", "off"},
      {"num_envs", 32},
      {"total_steps", 400000},
      {"seed", 0},
      {"output_dir", "runs/" + std::string(to_string(algorithm))},
      {"threads", 1},
      {"checkpoint_interval", 0},
      {"dump_buffer", false},
      {"lexicon", nullptr},
      {"env", {{"n_objects", e.n_objects}, {"horizon", e.horizon}, {"include_sequential", e.include_sequential}}},
      {"scorer", {{"embedding_dim", 32}, {"hidden", 64}, {"segments", 6}}},
      {"prior_fit", {{"steps", 200}, {"batch", 16}, {"learning_rate", 1e-3}}},
  };
  if (is_sac(algorithm)) {
    bool her = algorithm == Algorithm::sac_her;
    sac::SacConfig s = her ? sac::SacConfig::with_her() : sac::SacConfig{};
    critic::CriticConfig c;
    doc["critic"] = {{"input_mode", std::string(critic::to_string(c.input_mode))},
                     {"shared_backprop", c.shared_backprop},
                     {"twin", c.twin},
                     {"tau", c.tau},
                     {"use_target_network", c.use_target_network},
                     {"head_hidden", c.head_hidden}};
    json block = {
        {"update_frequency", s.update_frequency},
        {"number_of_updates", s.updates_per_cycle},
        {"batch_size", s.batch_size},
        {"discount_factor", s.gamma},
        {"optimizer", "adam"},
        {"critic_learning_rate", s.critic_lr},
        {"actor_learning_rate", s.actor_lr},
        {"entropy_coefficient", "auto"},
        {"entropy_coefficient_initialization", s.alpha_init},
        {"target_entropy", s.target_entropy},
        {"entropy_coefficient_learning_rate", s.alpha_lr},
        {"n_step", s.n_step},
        {"replay_buffer_capacity", s.buffer_capacity},
        {"warmup_steps", s.warmup_steps},
        {"maximum_gradient_norm", s.max_grad_norm},
    };
    if (her) {
      block["hindsight_proportion_per_batch"] = s.sampling.hindsight_proportion;
      block["sampling"] = std::string(replay::to_string(s.sampling.strategy));
      block["goal_type_prior"] = nullptr;
    }
    doc["sac"] = block;
  } else {
    ppo::PpoConfig p;
    doc["ppo"] = {
        {"number_of_transitions_collected_between_two_updates", p.rollout_length},
        {"number_of_epochs_per_update", p.epochs},
        {"batch_size", p.batch_size},
        {"entropy_loss_coefficient", p.entropy_coef},
        {"value_function_loss_coefficient", p.value_coef},
        {"discount_factor", p.gamma},
        {"optimizer", "adam"},
        {"learning_rate", p.learning_rate},
        {"lambda_factor_of_the_generalized_advantage_estimator", p.gae_lambda},
        {"clipping_parameter_epsilon", p.clip_epsilon},
        {"maximum_gradient_norm", p.max_grad_norm},
        {"kl_beta", p.kl_beta},
        {"value_head_hidden", p.value_hidden},
    };
  }
  return doc;
}

void apply_override(json& doc, std::string_view assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "': expected key.path=value");
  }
  std::string key(assignment.substr(0, eq));
  std::string text(assignment.substr(eq + 1));
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    auto dot = key.find('.', start);
    std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override '" + key + "': empty path component");
    if (!node->is_object()) throw ConfigError("override '" + key + "': '" + part + "' is not inside an object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

RunConfig resolve_config(json user, const std::vector<std::string>& overrides) {
  if (user.is_null()) user = json::object();
  if (!user.is_object()) throw ConfigError("config: expected an object at top level");
  for (const auto& o : overrides) apply_override(user, o);

  auto pick = [&](const char* key, const char* fallback) {
    if (!user.contains(key)) return std::string(fallback);
    if (!user[key].is_string()) throw ConfigError(std::string(key) + ": expected string, got " + type_name(user[key]));
    return user[key].get<std::string>();
  };
  Algorithm algorithm = parse_algorithm(pick("algorithm", "sac"));
  std::string environment = pick("environment", "full");

  json doc = default_config(algorithm, environment);
  if (is_sac(algorithm) && user.contains("ppo")) {
    throw ConfigError("ppo: unknown key for algorithm " + std::string(to_string(algorithm)));
  }
  if (!is_sac(algorithm) && (user.contains("sac") || user.contains("critic"))) {
    throw ConfigError(std::string(user.contains("sac") ? "sac" : "critic") + ": unknown key for algorithm " +
                      std::string(to_string(algorithm)));
  }
  merge(doc, user, "");

  RunConfig rc;
  rc.environment = environment;
  rc.algorithm = algorithm;
  try {
    rc.her_mode = ppo::parse_her_mode(doc["her_mode"].get<std::string>());
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("her_mode: ") + e.what());
  }
  if (is_sac(algorithm) && rc.her_mode != ppo::HerMode::off) {
    throw ConfigError("her_mode: applies to PPO only; use algorithm sac_her for SAC with hindsight");
  }
  rc.num_envs = positive<int>(doc, "num_envs", "config");
  rc.total_steps = positive<long>(doc, "total_steps", "config");
  if (!doc["seed"].is_number_unsigned() && doc["seed"].get<long long>() < 0) {
    throw ConfigError("seed: must be non-negative");
  }
  rc.seed = doc["seed"].get<std::uint64_t>();
  rc.output_dir = doc["output_dir"].get<std::string>();
  if (rc.output_dir.empty()) throw ConfigError("output_dir: must not be empty");
  rc.threads = positive<int>(doc, "threads", "config");
  rc.checkpoint_interval = doc["checkpoint_interval"].get<long>();
  if (rc.checkpoint_interval < 0) throw ConfigError("checkpoint_interval: must be non-negative");
  rc.dump_buffer = doc["dump_buffer"].get<bool>();
  if (!doc["lexicon"].is_null()) rc.lexicon = doc["lexicon"].get<std::string>();

  const json& e = doc["env"];
  rc.env.n_objects = positive<int>(e, "n_objects", "env");
  rc.env.horizon = positive<int>(e, "horizon", "env");
  rc.env.include_sequential = e["include_sequential"].get<bool>();

  const json& sc = doc["scorer"];
  rc.scorer.embedding_dim = positive<int>(sc, "embedding_dim", "scorer");
  rc.scorer.hidden = positive<int>(sc, "hidden", "scorer");
  rc.scorer.segments = positive<int>(sc, "segments", "scorer");
  if (rc.scorer.segments < 2) throw ConfigError("scorer.segments: must be at least 2");

  policy::PriorFitConfig prior;
  const json& pf = doc["prior_fit"];
  prior.steps = pf["steps"].get<int>();
  if (prior.steps < 0) throw ConfigError("prior_fit.steps: must be non-negative");
  prior.batch = positive<int>(pf, "batch", "prior_fit");
  prior.learning_rate = positive<double>(pf, "learning_rate", "prior_fit");

  if (is_sac(algorithm)) {
    const json& c = doc["critic"];
    try {
      rc.critic.input_mode = critic::parse_input_mode(c["input_mode"].get<std::string>());
    } catch (const ConfigError& err) {
      throw ConfigError(std::string("critic.input_mode: ") + err.what());
    }
    rc.critic.shared_backprop = c["shared_backprop"].get<bool>();
    rc.critic.twin = c["twin"].get<bool>();
    rc.critic.tau = c["tau"].get<double>();
    if (!(rc.critic.tau > 0.0 && rc.critic.tau <= 1.0)) throw ConfigError("critic.tau: must lie in (0, 1]");
    rc.critic.use_target_network = c["use_target_network"].get<bool>();
    rc.critic.head_hidden = positive<int>(c, "head_hidden", "critic");

    const json& s = doc["sac"];
    sac::SacConfig& cfg = rc.sac;
    cfg = algorithm == Algorithm::sac_her ? sac::SacConfig::with_her() : sac::SacConfig{};
    require_adam(s, "sac");
    cfg.update_frequency = positive<int>(s, "update_frequency", "sac");
    cfg.updates_per_cycle = positive<int>(s, "number_of_updates", "sac");
    cfg.batch_size = positive<int>(s, "batch_size", "sac");
    cfg.gamma = s["discount_factor"].get<double>();
    cfg.critic_lr = s["critic_learning_rate"].get<double>();
    cfg.actor_lr = s["actor_learning_rate"].get<double>();
    cfg.alpha_init = s["entropy_coefficient_initialization"].get<double>();
    if (s["entropy_coefficient"].is_number()) {
      cfg.auto_alpha = false;
      cfg.alpha_init = s["entropy_coefficient"].get<double>();
    }
    cfg.target_entropy = s["target_entropy"].get<double>();
    cfg.alpha_lr = s["entropy_coefficient_learning_rate"].get<double>();
    cfg.n_step = positive<int>(s, "n_step", "sac");
    long long capacity = s["replay_buffer_capacity"].get<long long>();
    if (capacity <= 0) throw ConfigError("sac.replay_buffer_capacity: must be positive");
    cfg.buffer_capacity = static_cast<std::size_t>(capacity);
    cfg.warmup_steps = s["warmup_steps"].get<long>();
    cfg.max_grad_norm = s["maximum_gradient_norm"].get<double>();
    cfg.her = algorithm == Algorithm::sac_her;
    if (cfg.her) {
      cfg.sampling.hindsight_proportion = s["hindsight_proportion_per_batch"].get<double>();
      try {
        cfg.sampling.strategy = replay::parse_sampling(s["sampling"].get<std::string>());
      } catch (const ConfigError& err) {
        throw ConfigError(std::string("sac.sampling: ") + err.what());
      }
      if (!s["goal_type_prior"].is_null()) {
        const json& p = s["goal_type_prior"];
        if (p.size() != env::kGoalKindCount) throw ConfigError("sac.goal_type_prior: expected 4 entries");
        double total = 0.0;
        for (std::size_t k = 0; k < env::kGoalKindCount; ++k) {
          cfg.sampling.goal_type_target[k] = p[k].get<double>();
          if (cfg.sampling.goal_type_target[k] < 0.0) throw ConfigError("sac.goal_type_prior: negative entry");
          total += cfg.sampling.goal_type_target[k];
        }
        if (!(total > 0.0)) throw ConfigError("sac.goal_type_prior: entries sum to zero");
      }
    } else {
      cfg.sampling = {};
    }
    cfg.threads = rc.threads;
    cfg.prior = prior;
    try {
      cfg.validate();
    } catch (const ConfigError& err) {
      throw ConfigError(std::string("sac: ") + err.what());
    }
  } else {
    const json& p = doc["ppo"];
    ppo::PpoConfig& cfg = rc.ppo;
    require_adam(p, "ppo");
    cfg.rollout_length = positive<int>(p, "number_of_transitions_collected_between_two_updates", "ppo");
    cfg.epochs = positive<int>(p, "number_of_epochs_per_update", "ppo");
    cfg.batch_size = positive<int>(p, "batch_size", "ppo");
    cfg.entropy_coef = p["entropy_loss_coefficient"].get<double>();
    cfg.value_coef = p["value_function_loss_coefficient"].get<double>();
    cfg.gamma = p["discount_factor"].get<double>();
    cfg.learning_rate = p["learning_rate"].get<double>();
    cfg.gae_lambda = p["lambda_factor_of_the_generalized_advantage_estimator"].get<double>();
    cfg.clip_epsilon = p["clipping_parameter_epsilon"].get<double>();
    cfg.max_grad_norm = p["maximum_gradient_norm"].get<double>();
    cfg.kl_beta = p["kl_beta"].get<double>();
    cfg.value_hidden = positive<int>(p, "value_head_hidden", "ppo");
    cfg.variant = algorithm == Algorithm::ppo_kl ? ppo::Variant::kl : ppo::Variant::clip;
    cfg.her_mode = rc.her_mode;
    cfg.threads = rc.threads;
    cfg.prior = prior;
    try {
      cfg.validate();
    } catch (const ConfigError& err) {
      throw ConfigError(std::string("ppo: ") + err.what());
    }
  }
  rc.resolved = std::move(doc);
  return rc;
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  json doc = json::parse(in, nullptr, false, true);
  if (doc.is_discarded()) throw ConfigError("config: " + path.string() + " is not valid JSON");
  return resolve_config(std::move(doc), overrides);
}

RunConfig load_run_config(const std::filesystem::path& run_dir) { return load_config(run_dir / "config.json"); }

}  // namespace sactext::harness
