#include "cortical/policy/params.hpp"

#include <cmath>

#include "cortical/numcore/io.hpp"
#include "json.hpp"

namespace cortical::policy {
namespace fs = std::filesystem;

void ParameterStore::set(const std::string& name, Tensor value) {
  tensors_[name] = value.astype(DType::f64).set_requires_grad(false);
}

const Tensor& ParameterStore::get(const std::string& name) const {
  const auto it = tensors_.find(name);
  if (it == tensors_.end()) throw FormatError("unknown parameter: " + name);
  return it->second;
}

Tensor& ParameterStore::get_mut(const std::string& name) {
  const auto it = tensors_.find(name);
  if (it == tensors_.end()) throw FormatError("unknown parameter: " + name);
  return it->second;
}

std::vector<std::string> ParameterStore::names(const std::string& prefix) const {
  std::vector<std::string> out;
  for (const auto& [name, t] : tensors_) {
    if (name.rfind(prefix, 0) == 0) out.push_back(name);
  }
  return out;
}

std::size_t ParameterStore::scalar_count(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& name : names(prefix)) n += get(name).numel();
  return n;
}

std::string ParameterStore::hash(const std::string& prefix) const {
  std::string bytes;
  for (const auto& name : names(prefix)) {
    const Tensor& t = get(name);
    bytes += name + shape_str(t.shape());
    const auto raw = t.bytes();
    bytes.append(reinterpret_cast<const char*>(raw.data()), raw.size());
  }
  return fnv1a_hex(bytes);
}

void ParameterStore::save(const fs::path& dir) const {
  fs::create_directories(dir);
  nlohmann::json list = nlohmann::json::array();
  for (const auto& [name, t] : tensors_) {
    write_tensor(dir / name, t, name);
    list.push_back(name);
  }
  write_text(dir / "params.json", nlohmann::json{{"names", list}, {"hash", hash()}}.dump(1));
}

ParameterStore ParameterStore::load(const fs::path& dir) {
  if (!fs::exists(dir / "params.json")) throw FormatError(dir.string() + ": missing params.json");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(dir / "params.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(dir.string() + ": " + e.what());
  }
  ParameterStore store;
  for (const auto& name : j.at("names")) {
    const std::string n = name.get<std::string>();
    store.set(n, read_tensor(dir / n));
  }
  if (j.contains("hash") && j["hash"].get<std::string>() != store.hash()) {
    throw FormatError(dir.string() + ": parameter hash mismatch");
  }
  return store;
}

void ParameterStore::merge(const ParameterStore& other, const std::string& prefix) {
  for (const auto& name : other.names(prefix)) tensors_[name] = other.get(name);
}

void init_conv(ParameterStore& store, Rng& rng, const std::string& name, std::size_t out, std::size_t in,
               std::size_t k) {
  Tensor w({out, in, k, k});
  const double sd = std::sqrt(2.0 / double(in * k * k));
  for (std::size_t i = 0; i < w.numel(); ++i) w.set(i, rng.normal(0.0, sd));
  store.set(name + ".w", w);
  store.set(name + ".b", Tensor::zeros({out}));
}

void init_linear(ParameterStore& store, Rng& rng, const std::string& name, std::size_t in, std::size_t out) {
  Tensor w({in, out});
  const double sd = std::sqrt(2.0 / double(in));
  for (std::size_t i = 0; i < w.numel(); ++i) w.set(i, rng.normal(0.0, sd));
  store.set(name + ".w", w);
  store.set(name + ".b", Tensor::zeros({out}));
}

void init_embedding(ParameterStore& store, Rng& rng, const std::string& name, Shape shape, double stddev) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, rng.normal(0.0, stddev));
  store.set(name, t);
}

Bound::Bound(Tape& tape, const ParameterStore& store, DType dtype, bool trainable, const std::string& prefix)
    : tape_(&tape), dtype_(dtype) {
  for (const auto& name : store.names(prefix)) {
    Tensor t = store.get(name).astype(dtype);
    vars_[name] = trainable ? tape.param(std::move(t)) : tape.constant(std::move(t));
  }
}

Var Bound::operator[](const std::string& name) const {
  const auto it = vars_.find(name);
  if (it == vars_.end()) throw FormatError("parameter not bound: " + name);
  return it->second;
}

AdamW::AdamW(const ParameterStore& store, std::vector<std::string> names, AdamWConfig cfg)
    : cfg_(cfg), names_(std::move(names)) {
  for (const auto& n : names_) {
    m_[n].assign(store.get(n).numel(), 0.0);
    v_[n].assign(store.get(n).numel(), 0.0);
  }
}

void AdamW::step(ParameterStore& store, const std::map<std::string, Tensor>& grads, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, double(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, double(t_));
  for (const auto& n : names_) {
    const auto it = grads.find(n);
    auto p = store.get_mut(n).data<double>();
    auto& m = m_[n];
    auto& v = v_[n];
    const bool decay = n.size() < 2 || n.compare(n.size() - 2, 2, ".b") != 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = it == grads.end() ? 0.0 : it->second.get(i);
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      if (decay) p[i] -= lr * cfg_.weight_decay * p[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
    }
  }
}

std::map<std::string, Tensor> collect_grads(const Bound& bound) {
  std::map<std::string, Tensor> out;
  for (const auto& [name, var] : bound.vars()) {
    if (bound.tape().requires_grad(var)) out[name] = bound.tape().grad(var).astype(DType::f64);
  }
  return out;
}

double grad_norm(const std::map<std::string, Tensor>& grads) {
  double s = 0.0;
  for (const auto& [name, g] : grads) {
    for (double x : g.values()) s += x * x;
  }
  return std::sqrt(s);
}

double schedule_lr(double base_lr, std::size_t step, std::size_t warmup, std::size_t total, double floor) {
  if (step < warmup) return base_lr * double(step + 1) / double(warmup);
  if (total <= warmup) return base_lr;
  const double t = std::min(1.0, double(step - warmup) / double(total - warmup));
  return base_lr * (floor + (1.0 - floor) * 0.5 * (1.0 + std::cos(M_PI * t)));
}

}  // namespace cortical::policy
