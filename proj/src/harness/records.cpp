#include "sactext/harness/records.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "sactext/common/errors.hpp"

namespace sactext::harness {

namespace {

constexpr std::size_t kTypeColumn = 5;  // first success-by-type column

std::string cell(const std::optional<double>& x) { return x ? format_number(*x) : "NA"; }

nlohmann::ordered_json value(const std::optional<double>& x) {
  if (!x || !std::isfinite(*x)) return nullptr;
  return *x;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::optional<double> parse_cell(const std::string& s, const std::string& column) {
  if (s == "NA") return std::nullopt;
  double x = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("metrics.csv: column " + column + " has malformed value '" + s + "'");
  }
  return x;
}

}  // namespace

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> columns = {
      "cycle",        "env_steps",   "episodes",       "updates",     "success_rate",
      "success_grasp", "success_grow", "success_seq_grow_grasp", "success_seq_grow_grow",
      "entropy",      "alpha",       "critic_loss",    "actor_loss",  "value_loss",
      "q_mean",       "buffer_hindsight_fraction",     "buffer_size", "warmup",
  };
  return columns;
}

std::string format_number(double x) {
  if (!std::isfinite(x)) return "NA";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

std::string csv_header() {
  std::string out;
  for (const auto& c : metrics_columns()) {
    if (!out.empty()) out += ',';
    out += c;
  }
  return out;
}

std::string csv_row(const CycleMetrics& m) {
  std::vector<std::string> cells = {std::to_string(m.cycle), std::to_string(m.env_steps), std::to_string(m.episodes),
                                    std::to_string(m.updates), cell(m.success_rate)};
  for (const auto& s : m.success_by_type) cells.push_back(cell(s));
  for (const auto* x : {&m.entropy, &m.alpha, &m.critic_loss, &m.actor_loss, &m.value_loss, &m.q_mean,
                        &m.buffer_hindsight_fraction}) {
    cells.push_back(cell(*x));
  }
  cells.push_back(m.buffer_size ? std::to_string(*m.buffer_size) : "NA");
  cells.push_back(m.warmup ? "1" : "0");
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  return out;
}

nlohmann::ordered_json to_json(const CycleMetrics& m) {
  nlohmann::ordered_json j;
  j["cycle"] = m.cycle;
  j["env_steps"] = m.env_steps;
  j["episodes"] = m.episodes;
  j["updates"] = m.updates;
  j["success_rate"] = value(m.success_rate);
  const auto& cols = metrics_columns();
  for (std::size_t k = 0; k < m.success_by_type.size(); ++k) j[cols[kTypeColumn + k]] = value(m.success_by_type[k]);
  j["entropy"] = value(m.entropy);
  j["alpha"] = value(m.alpha);
  j["critic_loss"] = value(m.critic_loss);
  j["actor_loss"] = value(m.actor_loss);
  j["value_loss"] = value(m.value_loss);
  j["q_mean"] = value(m.q_mean);
  j["buffer_hindsight_fraction"] = value(m.buffer_hindsight_fraction);
  j["buffer_size"] = m.buffer_size ? nlohmann::ordered_json(*m.buffer_size) : nlohmann::ordered_json(nullptr);
  j["warmup"] = m.warmup;
  return j;
}

std::vector<CycleMetrics> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != csv_header()) {
    throw ConfigError(path.string() + ": header does not match the metrics schema");
  }
  const auto& cols = metrics_columns();
  std::vector<CycleMetrics> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != cols.size()) {
      throw ConfigError(path.string() + ": row " + std::to_string(out.size() + 1) + " has " +
                        std::to_string(cells.size()) + " cells");
    }
    auto num = [&](std::size_t i) { return parse_cell(cells[i], cols[i]); };
    auto whole = [&](std::size_t i) {
      auto x = num(i);
      if (!x) throw ConfigError(path.string() + ": column " + cols[i] + " must not be NA");
      return static_cast<long>(*x);
    };
    CycleMetrics m;
    m.cycle = whole(0);
    m.env_steps = whole(1);
    m.episodes = whole(2);
    m.updates = whole(3);
    m.success_rate = num(4);
    for (std::size_t k = 0; k < m.success_by_type.size(); ++k) m.success_by_type[k] = num(kTypeColumn + k);
    m.entropy = num(9);
    m.alpha = num(10);
    m.critic_loss = num(11);
    m.actor_loss = num(12);
    m.value_loss = num(13);
    m.q_mean = num(14);
    m.buffer_hindsight_fraction = num(15);
    if (auto b = num(16)) m.buffer_size = static_cast<long>(*b);
    m.warmup = cells[17] == "1";
    out.push_back(m);
  }
  return out;
}

}  // namespace sactext::harness
