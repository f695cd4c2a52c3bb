#include "oddvox/optim.hpp"

#include <cmath>

namespace oddvox::diffcore {

template <typename T>
Tensor<T>& ParamStore<T>::add(const std::string& name, Tensor<T> t) {
  if (find(name)) throw ConfigError("ParamStore: duplicate parameter name '" + name + "'");
  t.set_requires_grad(true);
  params_.push_back({name, std::move(t)});
  return params_.back().tensor;
}

template <typename T>
Parameter<T>* ParamStore<T>::find(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

template <typename T>
std::int64_t ParamStore<T>::total_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

double LrSchedule::value(std::int64_t step) const {
  if (kind == ScheduleKind::constant) return base_lr;
  const double t = std::min<double>(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  return base_lr * 0.5 * (1.0 + std::cos(3.141592653589793 * t));
}

ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "constant") return ScheduleKind::constant;
  if (s == "cosine") return ScheduleKind::cosine;
  throw ConfigError("unknown schedule kind '" + s + "' (expected constant|cosine)");
}

std::string to_string(ScheduleKind k) {
  return k == ScheduleKind::constant ? "constant" : "cosine";
}

template <typename T>
AdamW<T>::AdamW(const ParamStore<T>& params, AdamWConfig cfg) : cfg_(cfg) {
  m_.reserve(params.params().size());
  v_.reserve(params.params().size());
  for (const auto& p : params.params()) {
    m_.emplace_back(p.tensor.numel(), T(0));
    v_.emplace_back(p.tensor.numel(), T(0));
  }
}

template <typename T>
void AdamW<T>::step(ParamStore<T>& params, double lr) {
  if (lr < 0) throw ConfigError("AdamW: negative learning rate " + std::to_string(lr));
  if (m_.size() != params.params().size()) {
    throw ConfigError("AdamW: optimizer state does not match parameter list");
  }
  step_ += 1;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.params().size(); ++i) {
    auto& p = params.params()[i];
    auto& theta = p.tensor.mutable_values();
    auto& m = m_[i];
    auto& v = v_[i];
    const bool has_grad = p.tensor.has_grad();
    const std::vector<T>* grad = has_grad ? &p.tensor.grad() : nullptr;
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double g = grad ? double((*grad)[j]) : 0.0;
      if (cfg_.weight_decay != 0.0) theta[j] = static_cast<T>(theta[j] * (1.0 - lr * cfg_.weight_decay));
      const double mj = cfg_.beta1 * double(m[j]) + (1.0 - cfg_.beta1) * g;
      const double vj = cfg_.beta2 * double(v[j]) + (1.0 - cfg_.beta2) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double mhat = mj / bc1;
      const double vhat = vj / bc2;
      theta[j] = static_cast<T>(theta[j] - lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
  }
}

template <typename T>
Tensor<T> init_weight(Shape s, Rng& rng, double stddev) {
  return Tensor<T>::truncated_normal(std::move(s), rng, stddev);
}

template <typename T>
Tensor<T> init_zeros(Shape s) {
  return Tensor<T>::zeros(std::move(s));
}

template <typename T>
Tensor<T> init_ones(Shape s) {
  return Tensor<T>::full(std::move(s), T(1));
}

template class ParamStore<float>;
template class ParamStore<double>;
template class AdamW<float>;
template class AdamW<double>;

template Tensor<float> init_weight(Shape, Rng&, double);
template Tensor<double> init_weight(Shape, Rng&, double);
template Tensor<float> init_zeros(Shape);
template Tensor<double> init_zeros(Shape);
template Tensor<float> init_ones(Shape);
template Tensor<double> init_ones(Shape);

}  // namespace oddvox::diffcore
