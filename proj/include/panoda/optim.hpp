#pragma once

#include <cstdint>
#include <vector>

#include "panoda/autodiff.hpp"
#include "panoda/tensor.hpp"

namespace panoda::optim {

// lr = base * (1 - iter/max_iter)^power. Throws on iter outside [0, max_iter].
double poly_lr(double base, int64_t iter, int64_t max_iter, double power = 0.9);

// SGD with classic momentum and L2 weight decay.
class SgdMomentum {
 public:
  SgdMomentum(std::vector<ad::Value> params, double momentum, double weight_decay);
  void step(double lr);
  void zero_grad();
  // Serialization hooks for checkpoints.
  std::vector<Tensor>& velocity() { return velocity_; }
  const std::vector<ad::Value>& params() const { return params_; }

 private:
  std::vector<ad::Value> params_;
  std::vector<Tensor> velocity_;
  double momentum_, weight_decay_;
};

class Adam {
 public:
  Adam(std::vector<ad::Value> params, double beta1, double beta2, double eps = 1e-8);
  void step(double lr);
  void zero_grad();
  std::vector<Tensor>& moment1() { return m_; }
  std::vector<Tensor>& moment2() { return v_; }
  int64_t& step_count() { return t_; }
  const std::vector<ad::Value>& params() const { return params_; }

 private:
  std::vector<ad::Value> params_;
  std::vector<Tensor> m_, v_;
  int64_t t_ = 0;
  double beta1_, beta2_, eps_;
};

}  // namespace panoda::optim
