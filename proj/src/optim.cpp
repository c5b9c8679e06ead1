#include "panoda/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace panoda::optim {

double poly_lr(double base, int64_t iter, int64_t max_iter, double power) {
  if (max_iter <= 0) throw std::invalid_argument("poly_lr: max_iter must be positive");
  if (iter < 0 || iter > max_iter)
    throw std::invalid_argument("poly_lr: iter " + std::to_string(iter) + " outside [0, " +
                                std::to_string(max_iter) + "]");
  return base * std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(max_iter), power);
}

SgdMomentum::SgdMomentum(std::vector<ad::Value> params, double momentum, double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
  velocity_.reserve(params_.size());
  for (const auto& p : params_) velocity_.push_back(Tensor::zeros(p->val.shape()));
}

void SgdMomentum::step(double lr) {
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    Tensor& vel = velocity_[i];
    const bool has_grad = p->grad_allocated;
    const int64_t n = p->val.size();
    for (int64_t k = 0; k < n; ++k) {
      const double g = (has_grad ? p->grad[k] : 0.0) + weight_decay_ * p->val[k];
      vel[k] = momentum_ * vel[k] + g;
      p->val[k] -= lr * vel[k];
    }
  }
}

void SgdMomentum::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

Adam::Adam(std::vector<ad::Value> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.push_back(Tensor::zeros(p->val.shape()));
    v_.push_back(Tensor::zeros(p->val.shape()));
  }
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    const bool has_grad = p->grad_allocated;
    const int64_t n = p->val.size();
    for (int64_t k = 0; k < n; ++k) {
      const double g = has_grad ? p->grad[k] : 0.0;
      m_[i][k] = beta1_ * m_[i][k] + (1.0 - beta1_) * g;
      v_[i][k] = beta2_ * v_[i][k] + (1.0 - beta2_) * g * g;
      const double mhat = m_[i][k] / bc1;
      const double vhat = v_[i][k] / bc2;
      p->val[k] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

}  // namespace panoda::optim
