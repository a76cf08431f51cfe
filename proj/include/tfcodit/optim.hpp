#pragma once

// AdamW with cosine/warmup learning-rate schedules.
//
// Parameters and both moment buffers are rounded to float after every update,
// so a float32 checkpoint captures the full optimizer state exactly.

#include "tfcodit/autograd.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace tfcodit::optim {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double clip_norm = 0.0;  // 0 disables global-norm clipping
};

enum class Schedule { Constant, Cosine };

struct ScheduleConfig {
  Schedule kind = Schedule::Cosine;
  double warmup_fraction = 0.0;
  int total_steps = 1;
};

/// Learning rate at 0-based `step`: linear warmup then cosine decay to 0.
double learning_rate(const ScheduleConfig& s, double base_lr, int step);

void to_json(nlohmann::json& j, const AdamWConfig& c);
void from_json(const nlohmann::json& j, AdamWConfig& c);

class AdamW {
 public:
  AdamW(ag::ParamStore& store, AdamWConfig cfg);

  /// Applies one update from the accumulated `grad` of every trainable
  /// parameter. Returns the gradient norm before clipping.
  double step(double lr);

  int steps() const { return step_; }
  void set_steps(int s) { step_ = s; }
  const AdamWConfig& config() const { return cfg_; }

  /// First/second moments in store order, including frozen parameters
  /// (whose moments stay zero).
  std::vector<Mat>& first_moments() { return m_; }
  std::vector<Mat>& second_moments() { return v_; }
  const std::vector<Mat>& first_moments() const { return m_; }
  const std::vector<Mat>& second_moments() const { return v_; }

  /// Weight decay skips biases and normalization gains/offsets.
  static bool decays(const std::string& name);

 private:
  ag::ParamStore& store_;
  AdamWConfig cfg_;
  std::vector<Mat> m_, v_;
  int step_ = 0;
};

}  // namespace tfcodit::optim
