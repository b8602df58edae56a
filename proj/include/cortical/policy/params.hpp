#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cortical/numcore/rng.hpp"
#include "cortical/numcore/tape.hpp"

namespace cortical::policy {

// Named f64 master parameters, iterated in name order.
class ParameterStore {
 public:
  void set(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  Tensor& get_mut(const std::string& name);
  std::vector<std::string> names(const std::string& prefix = "") const;
  std::size_t scalar_count(const std::string& prefix = "") const;

  // FNV-1a over names, shapes and bytes of every tensor under prefix.
  std::string hash(const std::string& prefix = "") const;

  // DIR/<name>.{bin,json} per tensor plus DIR/params.json listing the names.
  void save(const std::filesystem::path& dir) const;
  static ParameterStore load(const std::filesystem::path& dir);

  // Copies every tensor under prefix from other.
  void merge(const ParameterStore& other, const std::string& prefix = "");

 private:
  std::map<std::string, Tensor> tensors_;
};

// Initializers. Weights use He-normal scaling by fan_in; biases start at 0.
void init_conv(ParameterStore& store, Rng& rng, const std::string& name, std::size_t out,
               std::size_t in, std::size_t k);
void init_linear(ParameterStore& store, Rng& rng, const std::string& name, std::size_t in, std::size_t out);
void init_embedding(ParameterStore& store, Rng& rng, const std::string& name, Shape shape, double stddev = 0.02);

// Parameters placed on a tape in the compute dtype.
class Bound {
 public:
  Bound(Tape& tape, const ParameterStore& store, DType dtype, bool trainable, const std::string& prefix = "");
  Var operator[](const std::string& name) const;
  Tape& tape() const { return *tape_; }
  DType dtype() const { return dtype_; }
  const std::map<std::string, Var>& vars() const { return vars_; }

 private:
  Tape* tape_;
  DType dtype_;
  std::map<std::string, Var> vars_;
};

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

// AdamW over a fixed list of parameters; decay skips biases.
class AdamW {
 public:
  AdamW(const ParameterStore& store, std::vector<std::string> names, AdamWConfig cfg);
  // Applies one update with the given learning rate. grads holds entries
  // for a subset of the tracked names; missing names count as zero.
  void step(ParameterStore& store, const std::map<std::string, Tensor>& grads, double lr);
  std::size_t steps() const { return t_; }

 private:
  AdamWConfig cfg_;
  std::vector<std::string> names_;
  std::map<std::string, std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

// Gradients of the bound trainable parameters after tape.backward(), in f64.
std::map<std::string, Tensor> collect_grads(const Bound& bound);
double grad_norm(const std::map<std::string, Tensor>& grads);

// Linear warmup to base_lr, then cosine decay to floor * base_lr.
double schedule_lr(double base_lr, std::size_t step, std::size_t warmup, std::size_t total, double floor = 0.05);

}  // namespace cortical::policy
