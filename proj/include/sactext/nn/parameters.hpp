#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sactext/common/rng.hpp"

namespace sactext::nn {

using Shape = std::vector<std::size_t>;
using ParamId = std::size_t;

/// A named trainable array with its gradient slot and Adam state. Matrices are row-major
/// [rows x cols]; a dense layer mapping n inputs to m outputs has shape {m, n}.
struct Parameter {
  std::string name;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t adam_steps = 0;

  std::size_t size() const { return value.size(); }
  std::size_t rows() const { return shape.empty() ? 1 : shape.front(); }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
};

using Snapshot = std::vector<std::vector<double>>;

/// Flat collection of parameters addressed by id (registration order) or name.
///
/// Checkpoint format (little-endian):
///   "SACTPRM1"                      8-byte magic
///   u64 count
///   count records of:
///     u32 name_len, name bytes, u32 rank, u64 dims[rank], i64 adam_steps,
///     f64 value[n], f64 m[n], f64 v[n]     (n = product of dims)
class ParameterStore {
 public:
  ParamId add(std::string name, Shape shape);

  ParamId id(std::string_view name) const;
  bool contains(std::string_view name) const;
  std::vector<ParamId> ids_with_prefix(std::string_view prefix) const;
  std::vector<ParamId> all_ids() const;

  Parameter& operator[](ParamId id) { return params_.at(id); }
  const Parameter& operator[](ParamId id) const { return params_.at(id); }
  std::size_t size() const { return params_.size(); }
  std::size_t element_count() const;

  void zero_grad();
  void zero_grad(std::span<const ParamId> ids);

  Snapshot snapshot() const;
  Snapshot snapshot(std::span<const ParamId> ids) const;
  void restore(const Snapshot& snapshot);

  void save(const std::filesystem::path& path) const;
  /// Overwrites values and Adam state of every parameter in the file. Names and shapes must match.
  void load(const std::filesystem::path& path);

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, ParamId> index_;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) with fan_in = cols.
void init_uniform_fan_in(Parameter& p, Rng& rng);

/// Private gradient slots for one worker; merged into a store after the parallel section.
class GradientBuffer {
 public:
  explicit GradientBuffer(const ParameterStore& store);

  std::vector<double>& slot(ParamId id);
  void add_into(ParameterStore& store) const;
  void clear();

 private:
  const ParameterStore* store_;
  std::vector<std::vector<double>> slots_;
};

}  // namespace sactext::nn
