#include "sactext/nn/tape.hpp"

#include <algorithm>
#include <cmath>

#include "sactext/common/errors.hpp"

namespace sactext::nn {
namespace {

std::size_t idx(Var v) { return static_cast<std::size_t>(v.id); }

void require_same_size(const Tape& tape, Var a, Var b, const char* op) {
  if (tape.value(a).size() != tape.value(b).size()) {
    throw ShapeError(std::string(op) + ": operand sizes differ (" + std::to_string(tape.value(a).size()) +
                     " vs " + std::to_string(tape.value(b).size()) + ")");
  }
}

/// y = f(x) elementwise, with dy/dx computed from (x, y).
template <class Fwd, class Deriv>
Var elementwise(Tape& tape, Var a, Fwd fwd, Deriv deriv) {
  const auto& x = tape.value(a);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  if (!tape.requires_grad(a)) return tape.push(std::move(y), false, nullptr);
  const Var out = tape.next();
  return tape.push(std::move(y), true, [a, out, deriv](Tape& t) {
    const auto& xv = t.value(a);
    const auto& yv = t.value(out);
    const auto& gy = t.grad(out);
    auto& gx = t.grad_mut(a);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * deriv(xv[i], yv[i]);
  });
}

}  // namespace

Var Tape::constant(std::vector<double> value) { return push(std::move(value), false, nullptr); }

double Tape::item(Var v) const {
  const auto& x = value(v);
  if (x.size() != 1) throw ShapeError("item(): node holds " + std::to_string(x.size()) + " values");
  return x.front();
}

Var Tape::push(std::vector<double> value, bool needs_grad, BackwardFn backward) {
  nodes_.push_back({std::move(value), {}, needs_grad, std::move(backward)});
  return Var{static_cast<int>(nodes_.size() - 1)};
}

const std::vector<double>& Tape::grad(Var v) const {
  static const std::vector<double> empty;
  const auto& n = nodes_.at(idx(v));
  return n.grad.empty() ? empty : n.grad;
}

std::vector<double>& Tape::param_grad(ParamId id) {
  if (sink_) return sink_->slot(id);
  return (*owner_)[id].grad;
}

void Tape::backward(Var loss) {
  if (value(loss).size() != 1) {
    throw ContractError("backward() needs a scalar loss; node has " + std::to_string(value(loss).size()) +
                        " values");
  }
  for (std::size_t i = 0; i <= idx(loss); ++i) {
    auto& n = nodes_[i];
    if (n.needs_grad) {
      n.grad.assign(n.value.size(), 0.0);
    } else {
      n.grad.clear();
    }
  }
  if (!nodes_[idx(loss)].needs_grad) return;
  nodes_[idx(loss)].grad[0] = 1.0;
  for (std::size_t i = idx(loss) + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.needs_grad && n.backward) n.backward(*this);
  }
}

Var dense_slice(Tape& tape, const ParameterStore& store, ParamId w, std::size_t offset, Var x,
                std::optional<ParamId> b) {
  const Parameter& W = store[w];
  const auto& xv = tape.value(x);
  const std::size_t rows = W.rows();
  const std::size_t cols = W.cols();
  const std::size_t n = xv.size();
  if (offset + n > cols) {
    throw ShapeError("layer '" + W.name + "' expects " + std::to_string(cols) + " inputs, got " +
                     std::to_string(offset + n));
  }
  if (b && store[*b].size() != rows) throw ShapeError("bias of layer '" + W.name + "' has the wrong size");
  std::vector<double> y(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = W.value.data() + i * cols + offset;
    double acc = b ? store[*b].value[i] : 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * xv[j];
    y[i] = acc;
  }
  const bool track = tape.tracks(store);
  const bool gx = tape.requires_grad(x);
  if (!track && !gx) return tape.push(std::move(y), false, nullptr);
  const Var out = tape.next();
  return tape.push(std::move(y), true, [&store, w, b, offset, x, out, track, gx](Tape& t) {
    const Parameter& W = store[w];
    const std::size_t rows = W.rows();
    const std::size_t cols = W.cols();
    const auto& gy = t.grad(out);
    const auto& xv = t.value(x);
    const std::size_t n = xv.size();
    if (gx) {
      auto& g = t.grad_mut(x);
      for (std::size_t i = 0; i < rows; ++i) {
        const double gi = gy[i];
        if (gi == 0.0) continue;
        const double* row = W.value.data() + i * cols + offset;
        for (std::size_t j = 0; j < n; ++j) g[j] += row[j] * gi;
      }
    }
    if (track) {
      auto& gw = t.param_grad(w);
      for (std::size_t i = 0; i < rows; ++i) {
        const double gi = gy[i];
        if (gi == 0.0) continue;
        double* row = gw.data() + i * cols + offset;
        for (std::size_t j = 0; j < n; ++j) row[j] += gi * xv[j];
      }
      if (b) {
        auto& gb = t.param_grad(*b);
        for (std::size_t i = 0; i < rows; ++i) gb[i] += gy[i];
      }
    }
  });
}

Var dense(Tape& tape, const ParameterStore& store, ParamId w, std::optional<ParamId> b, Var x) {
  const Parameter& W = store[w];
  if (tape.value(x).size() != W.cols()) {
    throw ShapeError("layer '" + W.name + "' expects " + std::to_string(W.cols()) + " inputs, got " +
                     std::to_string(tape.value(x).size()));
  }
  return dense_slice(tape, store, w, 0, x, b);
}

Var dense(Tape& tape, const ParameterStore& store, std::string_view layer, Var x) {
  const std::string name(layer);
  if (!store.contains(name + ".w")) throw ShapeError("no layer named '" + name + "'");
  const ParamId w = store.id(name + ".w");
  if (tape.value(x).size() != store[w].cols()) {
    throw ShapeError("layer '" + name + "' expects " + std::to_string(store[w].cols()) + " inputs, got " +
                     std::to_string(tape.value(x).size()));
  }
  std::optional<ParamId> b;
  if (store.contains(name + ".b")) b = store.id(name + ".b");
  return dense_slice(tape, store, w, 0, x, b);
}

Var embed_mean(Tape& tape, const ParameterStore& store, ParamId table, std::span<const int> ids) {
  const Parameter& E = store[table];
  const std::size_t dim = E.cols();
  std::vector<double> y(dim, 0.0);
  if (ids.empty()) return tape.push(std::move(y), false, nullptr);
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= E.rows()) {
      throw ShapeError("embedding '" + E.name + "' has no row " + std::to_string(id));
    }
    const double* row = E.value.data() + static_cast<std::size_t>(id) * dim;
    for (std::size_t k = 0; k < dim; ++k) y[k] += row[k];
  }
  const double inv = 1.0 / static_cast<double>(ids.size());
  for (auto& v : y) v *= inv;
  if (!tape.tracks(store)) return tape.push(std::move(y), false, nullptr);
  const Var out = tape.next();
  std::vector<int> rows(ids.begin(), ids.end());
  return tape.push(std::move(y), true, [table, dim, inv, out, rows = std::move(rows)](Tape& t) {
    const auto& gy = t.grad(out);
    auto& ge = t.param_grad(table);
    for (int id : rows) {
      double* row = ge.data() + static_cast<std::size_t>(id) * dim;
      for (std::size_t k = 0; k < dim; ++k) row[k] += gy[k] * inv;
    }
  });
}

Var add(Tape& tape, Var a, Var b) {
  require_same_size(tape, a, b, "add");
  const auto& x = tape.value(a);
  const auto& z = tape.value(b);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] + z[i];
  const bool ga = tape.requires_grad(a);
  const bool gb = tape.requires_grad(b);
  if (!ga && !gb) return tape.push(std::move(y), false, nullptr);
  const Var out = tape.next();
  return tape.push(std::move(y), true, [a, b, ga, gb, out](Tape& t) {
    const auto& gy = t.grad(out);
    if (ga) {
      auto& g = t.grad_mut(a);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
    }
    if (gb) {
      auto& g = t.grad_mut(b);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
    }
  });
}

Var sub(Tape& tape, Var a, Var b) {
  require_same_size(tape, a, b, "sub");
  const auto& x = tape.value(a);
  const auto& z = tape.value(b);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] - z[i];
  const bool ga = tape.requires_grad(a);
  const bool gb = tape.requires_grad(b);
  if (!ga && !gb) return tape.push(std::move(y), false, nullptr);
  const Var out = tape.next();
  return tape.push(std::move(y), true, [a, b, ga, gb, out](Tape& t) {
    const auto& gy = t.grad(out);
    if (ga) {
      auto& g = t.grad_mut(a);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
    }
    if (gb) {
      auto& g = t.grad_mut(b);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= gy[i];
    }
  });
}

Var mul(Tape& tape, Var a, Var b) {
  require_same_size(tape, a, b, "mul");
  const auto& x = tape.value(a);
  const auto& z = tape.value(b);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * z[i];
  const bool ga = tape.requires_grad(a);
  const bool gb = tape.requires_grad(b);
  if (!ga && !gb) return tape.push(std::move(y), false, nullptr);
  const Var out = tape.next();
  return tape.push(std::move(y), true, [a, b, ga, gb, out](Tape& t) {
    const auto& gy = t.grad(out);
    const auto& xv = t.value(a);
    const auto& zv = t.value(b);
    if (ga) {
      auto& g = t.grad_mut(a);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * zv[i];
    }
    if (gb) {
      auto& g = t.grad_mut(b);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * xv[i];
    }
  });
}

Var scale(Tape& tape, Var a, double c) {
  return elementwise(tape, a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(Tape& tape, Var a, double c) {
  return elementwise(tape, a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var relu(Tape& tape, Var a) {
  return elementwise(tape, a, [](double x) { return x > 0.0 ? x : 0.0; },
                     [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var exp(Tape& tape, Var a) {
  return elementwise(tape, a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var square(Tape& tape, Var a) {
  return elementwise(tape, a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var clamp(Tape& tape, Var a, double lo, double hi) {
  return elementwise(tape, a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
                     [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Var minimum(Tape& tape, Var a, Var b) {
  require_same_size(tape, a, b, "minimum");
  const auto& x = tape.value(a);
  const auto& z = tape.value(b);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::min(x[i], z[i]);
  const bool ga = tape.requires_grad(a);
  const bool gb = tape.requires_grad(b);
  if (!ga && !gb) return tape.push(std::move(y), false, nullptr);
  const Var out = tape.next();
  return tape.push(std::move(y), true, [a, b, ga, gb, out](Tape& t) {
    const auto& gy = t.grad(out);
    const auto& xv = t.value(a);
    const auto& zv = t.value(b);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      const bool take_a = xv[i] <= zv[i];
      if (take_a && ga) t.grad_mut(a)[i] += gy[i];
      if (!take_a && gb) t.grad_mut(b)[i] += gy[i];
    }
  });
}

Var detach(Tape& tape, Var a) { return tape.push(tape.value(a), false, nullptr); }

Var log_softmax(Tape& tape, Var logits) {
  const auto& x = tape.value(logits);
  if (x.empty()) throw ShapeError("log_softmax of an empty vector");
  const double mx = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double v : x) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] - lse;
  if (!tape.requires_grad(logits)) return tape.push(std::move(y), false, nullptr);
  const Var out = tape.next();
  return tape.push(std::move(y), true, [logits, out](Tape& t) {
    const auto& gy = t.grad(out);
    const auto& yv = t.value(out);
    double total = 0.0;
    for (double g : gy) total += g;
    auto& gx = t.grad_mut(logits);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] - std::exp(yv[i]) * total;
  });
}

Var pick(Tape& tape, Var a, std::size_t index) {
  const auto& x = tape.value(a);
  if (index >= x.size()) {
    throw ShapeError("pick: index " + std::to_string(index) + " out of " + std::to_string(x.size()));
  }
  if (!tape.requires_grad(a)) return tape.push({x[index]}, false, nullptr);
  const Var out = tape.next();
  return tape.push({x[index]}, true, [a, index, out](Tape& t) { t.grad_mut(a)[index] += t.grad(out)[0]; });
}

Var sum(Tape& tape, Var a) {
  double s = 0.0;
  for (double v : tape.value(a)) s += v;
  if (!tape.requires_grad(a)) return tape.push({s}, false, nullptr);
  const Var out = tape.next();
  return tape.push({s}, true, [a, out](Tape& t) {
    const double g = t.grad(out)[0];
    for (auto& v : t.grad_mut(a)) v += g;
  });
}

Var dot(Tape& tape, Var a, Var b) {
  require_same_size(tape, a, b, "dot");
  const auto& x = tape.value(a);
  const auto& z = tape.value(b);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * z[i];
  const bool ga = tape.requires_grad(a);
  const bool gb = tape.requires_grad(b);
  if (!ga && !gb) return tape.push({s}, false, nullptr);
  const Var out = tape.next();
  return tape.push({s}, true, [a, b, ga, gb, out](Tape& t) {
    const double g = t.grad(out)[0];
    const auto& xv = t.value(a);
    const auto& zv = t.value(b);
    if (ga) {
      auto& gx = t.grad_mut(a);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * zv[i];
    }
    if (gb) {
      auto& gz = t.grad_mut(b);
      for (std::size_t i = 0; i < gz.size(); ++i) gz[i] += g * xv[i];
    }
  });
}

Var concat(Tape& tape, std::span<const Var> parts) {
  std::vector<double> y;
  bool g = false;
  for (Var p : parts) {
    const auto& x = tape.value(p);
    y.insert(y.end(), x.begin(), x.end());
    g = g || tape.requires_grad(p);
  }
  if (!g) return tape.push(std::move(y), false, nullptr);
  const Var out = tape.next();
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.push(std::move(y), true, [inputs = std::move(inputs), out](Tape& t) {
    const auto& gy = t.grad(out);
    std::size_t offset = 0;
    for (Var p : inputs) {
      const std::size_t n = t.value(p).size();
      if (t.requires_grad(p)) {
        auto& gp = t.grad_mut(p);
        for (std::size_t i = 0; i < n; ++i) gp[i] += gy[offset + i];
      }
      offset += n;
    }
  });
}

Var sum_scalars(Tape& tape, std::span<const Var> scalars) {
  double s = 0.0;
  bool g = false;
  for (Var v : scalars) {
    s += tape.item(v);
    g = g || tape.requires_grad(v);
  }
  if (!g) return tape.push({s}, false, nullptr);
  const Var out = tape.next();
  std::vector<Var> inputs(scalars.begin(), scalars.end());
  return tape.push({s}, true, [inputs = std::move(inputs), out](Tape& t) {
    const double gy = t.grad(out)[0];
    for (Var v : inputs) {
      if (t.requires_grad(v)) t.grad_mut(v)[0] += gy;
    }
  });
}

}  // namespace sactext::nn
