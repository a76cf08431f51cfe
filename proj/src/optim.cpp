#include "tfcodit/optim.hpp"

#include "tfcodit/errors.hpp"
#include "tfcodit/nn.hpp"

#include <cmath>
#include <numbers>

namespace tfcodit::optim {

double learning_rate(const ScheduleConfig& s, double base_lr, int step) {
  const int total = std::max(1, s.total_steps);
  const int warm = static_cast<int>(std::floor(s.warmup_fraction * total));
  if (warm > 0 && step < warm) return base_lr * (step + 1) / warm;
  if (s.kind == Schedule::Constant) return base_lr;
  const double span = std::max(1, total - warm);
  const double progress = std::clamp((step - warm) / span, 0.0, 1.0);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void to_json(nlohmann::json& j, const AdamWConfig& c) {
  j = nlohmann::json{{"lr", c.lr},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"eps", c.eps},
                     {"weight_decay", c.weight_decay},
                     {"clip_norm", c.clip_norm}};
}

void from_json(const nlohmann::json& j, AdamWConfig& c) {
  AdamWConfig d;
  c.lr = j.value("lr", d.lr);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.eps = j.value("eps", d.eps);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.clip_norm = j.value("clip_norm", d.clip_norm);
}

bool AdamW::decays(const std::string& name) {
  auto ends = [&](const std::string& suf) {
    return name.size() >= suf.size() && name.compare(name.size() - suf.size(), suf.size(), suf) == 0;
  };
  return !(ends(".bias") || ends(".gain") || ends(".offset"));
}

AdamW::AdamW(ag::ParamStore& store, AdamWConfig cfg) : store_(store), cfg_(cfg) {
  for (const ag::Parameter* p : store_.all()) {
    m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
  }
}

double AdamW::step(double lr) {
  auto params = store_.all();
  if (params.size() != m_.size()) {
    throw Error(ErrorCode::ShapeMismatch, "parameter store changed after optimizer creation");
  }
  double sq = 0.0;
  for (const ag::Parameter* p : params) {
    if (p->trainable && p->grad.size() == p->value.size()) sq += p->grad.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  const double clip = (cfg_.clip_norm > 0 && norm > cfg_.clip_norm) ? cfg_.clip_norm / norm : 1.0;

  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, step_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, step_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    ag::Parameter& p = *params[i];
    if (!p.trainable || p.grad.size() != p.value.size()) continue;
    Mat& m = m_[i];
    Mat& v = v_[i];
    const Mat g = p.grad * clip;
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    nn::round_to_float(m);
    nn::round_to_float(v);
    if (cfg_.weight_decay > 0 && decays(p.name)) p.value *= (1.0 - lr * cfg_.weight_decay);
    p.value.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg_.eps);
    nn::round_to_float(p.value);
  }
  return norm;
}

}  // namespace tfcodit::optim
