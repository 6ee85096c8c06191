#include "sactext/nn/parameters.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "sactext/common/errors.hpp"

namespace sactext::nn {
namespace {

constexpr char kMagic[8] = {'S', 'A', 'C', 'T', 'P', 'R', 'M', '1'};

template <class T>
void write_pod(std::ostream& out, const T& x) {
  out.write(reinterpret_cast<const char*>(&x), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
  T x{};
  in.read(reinterpret_cast<char*>(&x), sizeof(T));
  if (!in) throw ConfigError("truncated parameter checkpoint");
  return x;
}

void write_doubles(std::ostream& out, const std::vector<double>& xs) {
  out.write(reinterpret_cast<const char*>(xs.data()), static_cast<std::streamsize>(xs.size() * sizeof(double)));
}

void read_doubles(std::istream& in, std::vector<double>& xs) {
  in.read(reinterpret_cast<char*>(xs.data()), static_cast<std::streamsize>(xs.size() * sizeof(double)));
  if (!in) throw ConfigError("truncated parameter checkpoint");
}

}  // namespace

ParamId ParameterStore::add(std::string name, Shape shape) {
  if (index_.contains(name)) throw ContractError("parameter '" + name + "' registered twice");
  const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  Parameter p;
  p.name = name;
  p.shape = std::move(shape);
  p.value.assign(n, 0.0);
  p.grad.assign(n, 0.0);
  p.m.assign(n, 0.0);
  p.v.assign(n, 0.0);
  const ParamId id = params_.size();
  params_.push_back(std::move(p));
  index_.emplace(std::move(name), id);
  return id;
}

ParamId ParameterStore::id(std::string_view name) const {
  const auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ContractError("no parameter named '" + std::string(name) + "'");
  return it->second;
}

bool ParameterStore::contains(std::string_view name) const { return index_.contains(std::string(name)); }

std::vector<ParamId> ParameterStore::ids_with_prefix(std::string_view prefix) const {
  std::vector<ParamId> out;
  for (ParamId i = 0; i < params_.size(); ++i) {
    if (params_[i].name.starts_with(prefix)) out.push_back(i);
  }
  return out;
}

std::vector<ParamId> ParameterStore::all_ids() const {
  std::vector<ParamId> out(params_.size());
  std::iota(out.begin(), out.end(), ParamId{0});
  return out;
}

std::size_t ParameterStore::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

void ParameterStore::zero_grad(std::span<const ParamId> ids) {
  for (ParamId id : ids) std::fill(params_.at(id).grad.begin(), params_.at(id).grad.end(), 0.0);
}

Snapshot ParameterStore::snapshot() const {
  Snapshot s;
  s.reserve(params_.size());
  for (const auto& p : params_) s.push_back(p.value);
  return s;
}

Snapshot ParameterStore::snapshot(std::span<const ParamId> ids) const {
  Snapshot s;
  for (ParamId id : ids) s.push_back(params_.at(id).value);
  return s;
}

void ParameterStore::restore(const Snapshot& snapshot) {
  if (snapshot.size() != params_.size()) throw ContractError("snapshot does not match the store");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (snapshot[i].size() != params_[i].size()) {
      throw ShapeError("snapshot shape mismatch for '" + params_[i].name + "'");
    }
    params_[i].value = snapshot[i];
  }
}

void ParameterStore::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_pod<std::uint64_t>(out, params_.size());
  for (const auto& p : params_) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p.shape.size()));
    for (auto d : p.shape) write_pod<std::uint64_t>(out, d);
    write_pod<std::int64_t>(out, p.adam_steps);
    write_doubles(out, p.value);
    write_doubles(out, p.m);
    write_doubles(out, p.v);
  }
}

void ParameterStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ConfigError(path.string() + " is not a parameter checkpoint");
  }
  const auto count = read_pod<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name(read_pod<std::uint32_t>(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    Shape shape(read_pod<std::uint32_t>(in));
    for (auto& d : shape) d = read_pod<std::uint64_t>(in);
    auto& p = params_.at(id(name));
    if (p.shape != shape) throw ShapeError("checkpoint shape mismatch for '" + name + "'");
    p.adam_steps = read_pod<std::int64_t>(in);
    read_doubles(in, p.value);
    read_doubles(in, p.m);
    read_doubles(in, p.v);
  }
}

void init_uniform_fan_in(Parameter& p, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(p.cols()));
  for (auto& x : p.value) x = rng.uniform(-bound, bound);
}

GradientBuffer::GradientBuffer(const ParameterStore& store) : store_(&store), slots_(store.size()) {}

std::vector<double>& GradientBuffer::slot(ParamId id) {
  auto& s = slots_.at(id);
  if (s.empty()) s.assign((*store_)[id].size(), 0.0);
  return s;
}

void GradientBuffer::add_into(ParameterStore& store) const {
  for (ParamId id = 0; id < slots_.size(); ++id) {
    if (slots_[id].empty()) continue;
    auto& g = store[id].grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += slots_[id][i];
  }
}

void GradientBuffer::clear() {
  for (auto& s : slots_) std::fill(s.begin(), s.end(), 0.0);
}

}  // namespace sactext::nn
