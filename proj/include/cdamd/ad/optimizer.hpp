#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "cdamd/ad/graph.hpp"

namespace cdamd::ad {

struct LrSchedule {
  double base_lr = 1e-3;
  int warmup_steps = 0;       // linear ramp from 0 to base_lr
  int total_steps = 0;        // cosine decay horizon; 0 = constant after warmup
  double min_lr = 1e-6;

  double at(int step) const {
    if (warmup_steps > 0 && step < warmup_steps)
      return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    if (total_steps <= warmup_steps) return base_lr;
    double u = static_cast<double>(step - warmup_steps) /
               static_cast<double>(total_steps - warmup_steps);
    if (u > 1.0) u = 1.0;
    return min_lr + (base_lr - min_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * u));
  }
};

template <class Scalar>
class Adam {
 public:
  explicit Adam(ParamStore<Scalar>& params, LrSchedule schedule = {},
                double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : params_(&params), schedule_(schedule), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].setZero(params[i].value.rows(), params[i].value.cols());
      v_[i].setZero(params[i].value.rows(), params[i].value.cols());
    }
  }

  void step() {
    const double lr = schedule_.at(step_);
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1_, step_);
    const double bc2 = 1.0 - std::pow(beta2_, step_);
    for (std::size_t i = 0; i < params_->size(); ++i) {
      auto& p = (*params_)[i];
      m_[i] = (beta1_ * m_[i].template cast<double>() + (1.0 - beta1_) * p.grad.template cast<double>()).eval();
      v_[i] = (beta2_ * v_[i].array() + (1.0 - beta2_) * p.grad.template cast<double>().array().square()).matrix();
      Mat<double> mhat = m_[i] / bc1;
      Mat<double> vhat = v_[i] / bc2;
      p.value -= (lr * mhat.array() / (vhat.array().sqrt() + eps_)).matrix().template cast<Scalar>();
    }
  }

  int step_count() const { return step_; }

 private:
  ParamStore<Scalar>* params_;
  LrSchedule schedule_;
  double beta1_, beta2_, eps_;
  int step_ = 0;
  // Moments kept in double so the update rule behaves identically for
  // float and double parameter stores.
  std::vector<Mat<double>> m_;
  std::vector<Mat<double>> v_;
};

}  // namespace cdamd::ad
