#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "sactext/common/errors.hpp"
#include "sactext/env/playground.hpp"

namespace sactext::env {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool is_word(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return std::islower(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) || c == '_';
  });
}

}  // namespace

std::string_view to_string(Category category) {
  switch (category) {
    case Category::furniture: return "furniture";
    case Category::supply: return "supply";
    case Category::plant: return "plant";
    case Category::animal: return "animal";
  }
  return "?";
}

Category parse_category(std::string_view name) {
  if (name == "furniture") return Category::furniture;
  if (name == "supply") return Category::supply;
  if (name == "plant") return Category::plant;
  if (name == "animal") return Category::animal;
  throw ConfigError("unknown object category '" + std::string(name) + "'");
}

Lexicon::Lexicon(std::vector<std::string> colors, std::vector<KindInfo> kinds)
    : colors_(std::move(colors)), kinds_(std::move(kinds)) {
  if (colors_.empty()) throw ConfigError("lexicon has no colors");
  if (kinds_.empty()) throw ConfigError("lexicon has no kinds");
  std::vector<std::string> seen;
  for (const auto& c : colors_) {
    if (!is_word(c)) throw ConfigError("lexicon color '" + c + "' must be a single lowercase word");
    seen.push_back(c);
  }
  for (const auto& k : kinds_) {
    if (!is_word(k.name)) throw ConfigError("lexicon kind '" + k.name + "' must be a single lowercase word");
    seen.push_back(k.name);
  }
  std::sort(seen.begin(), seen.end());
  if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) {
    throw ConfigError("lexicon words must be unique across colors and kinds");
  }
}

Lexicon Lexicon::standard() {
  std::vector<KindInfo> kinds;
  for (const char* name : {"dog", "cat", "chameleon", "human", "fly", "parrot", "mouse", "lion", "pig", "cow"}) {
    kinds.push_back({name, Category::animal});
  }
  for (const char* name : {"cactus", "carnivorous", "flower", "tree", "bush", "grass", "algae", "tea", "rose", "bonsai"}) {
    kinds.push_back({name, Category::plant});
  }
  for (const char* name : {"cupboard", "sink", "window", "sofa", "carpet", "door", "chair", "desk", "lamp", "table"}) {
    kinds.push_back({name, Category::furniture});
  }
  kinds.push_back({"water", Category::supply});
  kinds.push_back({"food", Category::supply});
  return Lexicon({"red", "green", "blue"}, std::move(kinds));
}

Lexicon Lexicon::parse(std::string_view text) {
  std::vector<std::string> colors;
  std::vector<KindInfo> kinds;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("lexicon line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key == "colors") {
      std::string item;
      std::istringstream items{std::string(value)};
      while (std::getline(items, item, ',')) {
        const auto c = trim(item);
        if (!c.empty()) colors.emplace_back(c);
      }
    } else {
      kinds.push_back({std::string(key), parse_category(value)});
    }
  }
  return Lexicon(std::move(colors), std::move(kinds));
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open lexicon file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

std::string Lexicon::serialize() const {
  std::string out = "colors = ";
  for (std::size_t i = 0; i < colors_.size(); ++i) {
    if (i) out += ", ";
    out += colors_[i];
  }
  out += '\n';
  for (const auto& k : kinds_) {
    out += k.name + " = " + std::string(to_string(k.category)) + '\n';
  }
  return out;
}

bool Lexicon::growable(int kind) const {
  const auto c = category(kind);
  return c == Category::plant || c == Category::animal;
}

bool Lexicon::feeds(int supply_kind, int target_kind) const {
  if (category(supply_kind) != Category::supply) return false;
  switch (category(target_kind)) {
    case Category::plant: return kind_name(supply_kind) == "water";
    case Category::animal: return true;
    default: return false;
  }
}

std::optional<int> Lexicon::find_color(std::string_view name) const {
  for (std::size_t i = 0; i < colors_.size(); ++i) {
    if (colors_[i] == name) return static_cast<int>(i);
  }
  return std::nullopt;
}

std::optional<int> Lexicon::find_kind(std::string_view name) const {
  for (std::size_t i = 0; i < kinds_.size(); ++i) {
    if (kinds_[i].name == name) return static_cast<int>(i);
  }
  return std::nullopt;
}

}  // namespace sactext::env
