// Shared fixtures for the behavior-scheduling runs: three distinct periodic
// 2-d signals (circles of different radius, speed and direction, so the
// context -> next-state map of each is a distinct deterministic function).
#pragma once

#include <cmath>
#include <vector>

#include "orgami/anc.hpp"

namespace ancfix {

using orgami::anc::Vec;

inline std::vector<Vec> circle_signal(double radius, int period, int direction) {
  std::vector<Vec> out;
  for (int i = 0; i < period; ++i) {
    const double theta = direction * 2.0 * M_PI * i / period;
    out.push_back({radius * std::cos(theta), radius * std::sin(theta)});
  }
  return out;
}

inline std::vector<std::vector<Vec>> three_signals() {
  return {circle_signal(1.0, 8, +1), circle_signal(0.45, 5, +1), circle_signal(1.6, 8, -1)};
}

inline orgami::anc::ControllerConfig fig8_config() {
  orgami::anc::ControllerConfig cfg;
  cfg.context_width = 2;
  cfg.state_width = 2;
  cfg.theta_select = 0.005;
  cfg.theta_learn = 0.005;
  cfg.alpha = 0.5;
  cfg.buffer_target = 40;
  cfg.hyper = {16, 0.1, 3000, 7, 0.5};
  return cfg;
}

struct Fig8Result {
  std::size_t behaviors = 0;
  std::size_t pass2_selected = 0;
  std::size_t pass2_correct = 0;
  double pass2_worst_error = 0.0;
};

/// Two presentations of each signal; selections during the second pass are
/// scored against the behavior learnt for the signal in the first pass.
inline Fig8Result run_fig8(orgami::anc::Controller& controller,
                           const std::vector<std::vector<Vec>>& signals,
                           std::size_t steps_per_presentation = 60) {
  Fig8Result res;
  std::vector<std::size_t> behavior_of(signals.size(), 0);
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t sig = 0; sig < signals.size(); ++sig) {
      const auto& samples = signals[sig];
      for (std::size_t s = 0; s < steps_per_presentation; ++s) {
        const Vec& ctx = samples[s % samples.size()];
        const Vec& next = samples[(s + 1) % samples.size()];
        const auto step = controller.step(ctx, next);
        if (step.trained) behavior_of[sig] = controller.library().back().id;
        if (pass == 1 && step.selected) {
          res.pass2_selected += 1;
          if (*step.selected == behavior_of[sig]) res.pass2_correct += 1;
          res.pass2_worst_error = std::max(res.pass2_worst_error, step.selected_error);
        }
      }
    }
  }
  res.behaviors = controller.library().size();
  return res;
}

}  // namespace ancfix
