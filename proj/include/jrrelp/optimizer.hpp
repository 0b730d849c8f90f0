#pragma once

// First-order optimizers over a fixed parameter list. SGD is the default;
// Adagrad and Adam are available. Gradient clipping is by global L2 norm
// across all parameters. Frozen (PAD) columns carry structurally zero
// gradients and are re-pinned here as a hard guarantee.

#include <cmath>
#include <string>
#include <vector>

#include "jrrelp/autodiff.hpp"
#include "jrrelp/errors.hpp"

namespace jrrelp {

enum class OptimizerKind { sgd, adagrad, adam };

inline const char* to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::adagrad: return "adagrad";
    case OptimizerKind::adam: return "adam";
  }
  return "?";
}

inline OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adagrad") return OptimizerKind::adagrad;
  if (s == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer: '" + s + "' (want sgd|adagrad|adam)");
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double lr = 0.3;
  double clip_norm = 5.0;  // 0 disables clipping
  double beta1 = 0.9, beta2 = 0.999;  // adam
  double eps = 1e-8;                  // adam/adagrad denominator floor

  void validate() const {
    if (lr <= 0) throw ConfigError("optimizer: lr must be > 0");
    if (clip_norm < 0) throw ConfigError("optimizer: clip_norm must be >= 0");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
      throw ConfigError("optimizer: betas must be in [0, 1)");
    if (eps <= 0) throw ConfigError("optimizer: eps must be > 0");
  }
};

template <typename S>
class Optimizer {
 public:
  Optimizer(const OptimizerConfig& cfg, std::vector<ad::Parameter<S>*> params)
      : cfg_(cfg), lr_(cfg.lr), params_(std::move(params)) {
    cfg_.validate();
    if (cfg_.kind != OptimizerKind::sgd) {
      for (auto* p : params_) {
        state1_.push_back(ad::Mat<S>::Zero(p->value.rows(), p->value.cols()));
        if (cfg_.kind == OptimizerKind::adam)
          state2_.push_back(ad::Mat<S>::Zero(p->value.rows(), p->value.cols()));
      }
    }
  }

  // Scales all gradients so the global L2 norm is at most clip_norm.
  // Returns the pre-clip norm for logging.
  double clip() {
    pin_frozen();
    double sumsq = 0;
    for (const auto* p : params_)
      sumsq += static_cast<double>(p->grad.squaredNorm());
    const double norm = std::sqrt(sumsq);
    if (cfg_.clip_norm > 0 && norm > cfg_.clip_norm) {
      const S s = static_cast<S>(cfg_.clip_norm / norm);
      for (auto* p : params_) p->grad *= s;
    }
    return norm;
  }

  void step() {
    pin_frozen();
    ++t_;
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = *params_[i];
      const S lr = static_cast<S>(lr_);
      switch (cfg_.kind) {
        case OptimizerKind::sgd:
          p.value -= lr * p.grad;
          break;
        case OptimizerKind::adagrad: {
          state1_[i].array() += p.grad.array().square();
          p.value.array() -=
              lr * p.grad.array() /
              (state1_[i].array().sqrt() + static_cast<S>(cfg_.eps));
          break;
        }
        case OptimizerKind::adam: {
          const S b1 = static_cast<S>(cfg_.beta1), b2 = static_cast<S>(cfg_.beta2);
          state1_[i] = b1 * state1_[i] + (S(1) - b1) * p.grad;
          state2_[i].array() =
              b2 * state2_[i].array() + (S(1) - b2) * p.grad.array().square();
          const S c1 = S(1) - static_cast<S>(std::pow(cfg_.beta1, t_));
          const S c2 = S(1) - static_cast<S>(std::pow(cfg_.beta2, t_));
          p.value.array() -= lr * (state1_[i].array() / c1) /
                             ((state2_[i].array() / c2).sqrt() +
                              static_cast<S>(cfg_.eps));
          break;
        }
      }
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->grad.setZero();
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  const std::vector<ad::Parameter<S>*>& params() const { return params_; }

 private:
  void pin_frozen() {
    for (auto* p : params_)
      if (p->frozen_col >= 0) p->grad.col(p->frozen_col).setZero();
  }

  OptimizerConfig cfg_;
  double lr_;
  long t_ = 0;  // adam step count for bias correction
  std::vector<ad::Parameter<S>*> params_;
  std::vector<ad::Mat<S>> state1_;  // adagrad accumulator / adam first moment
  std::vector<ad::Mat<S>> state2_;  // adam second moment
};

}  // namespace jrrelp
