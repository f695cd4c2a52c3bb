#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oddvox/tensor.hpp"

namespace oddvox::diffcore {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;  // leaf with requires_grad
};

// Flat registry of named parameters. Names must be unique; registration
// order is the canonical order used by the optimizer and checkpoints.
template <typename T>
class ParamStore {
 public:
  Tensor<T>& add(const std::string& name, Tensor<T> t);
  const std::vector<Parameter<T>>& params() const { return params_; }
  std::vector<Parameter<T>>& params() { return params_; }
  Parameter<T>* find(const std::string& name);
  std::int64_t total_count() const;
  void zero_grad();

 private:
  std::vector<Parameter<T>> params_;
};

enum class ScheduleKind { constant, cosine };

// lr(0) == base_lr; for cosine, lr(total_steps) == 0 and the value is
// non-increasing in between.
struct LrSchedule {
  double base_lr = 2e-4;
  std::int64_t total_steps = 1;
  ScheduleKind kind = ScheduleKind::cosine;

  double value(std::int64_t step) const;
};

ScheduleKind schedule_kind_from_string(const std::string& s);
std::string to_string(ScheduleKind k);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// AdamW with decoupled weight decay: theta <- theta - lr*wd*theta applied
// separately from the bias-corrected Adam update.
template <typename T>
class AdamW {
 public:
  AdamW() = default;
  AdamW(const ParamStore<T>& params, AdamWConfig cfg);

  // Reads gradients from each parameter's node-resident grad buffer.
  void step(ParamStore<T>& params, double lr);

  std::int64_t step_count() const { return step_; }
  const AdamWConfig& config() const { return cfg_; }

  // Checkpoint access: moments in parameter registration order.
  std::vector<std::vector<T>>& moment1() { return m_; }
  std::vector<std::vector<T>>& moment2() { return v_; }
  void set_step_count(std::int64_t s) { step_ = s; }

 private:
  AdamWConfig cfg_;
  std::vector<std::vector<T>> m_, v_;
  std::int64_t step_ = 0;
};

// Initialization helpers (trunc-normal weights, zero biases).
template <typename T>
Tensor<T> init_weight(Shape s, Rng& rng, double stddev = 0.02);
template <typename T>
Tensor<T> init_zeros(Shape s);
template <typename T>
Tensor<T> init_ones(Shape s);

extern template class ParamStore<float>;
extern template class ParamStore<double>;
extern template class AdamW<float>;
extern template class AdamW<double>;

}  // namespace oddvox::diffcore
