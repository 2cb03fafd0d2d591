#include "dape/schedule.hpp"

#include <cmath>
#include <string>

#include "dape/error.hpp"

namespace dape {

NoiseSchedule::NoiseSchedule(std::vector<double> alphas_cumprod) : alphas_cumprod_(std::move(alphas_cumprod)) {
  if (alphas_cumprod_.size() < 2) throw ConfigError("noise schedule needs at least one step");
  if (alphas_cumprod_[0] != 1.0) throw ConfigError("alpha_bar[0] must be exactly 1");
  for (std::size_t t = 1; t < alphas_cumprod_.size(); ++t) {
    const double a = alphas_cumprod_[t];
    if (!(a > 0.0 && a < alphas_cumprod_[t - 1])) {
      throw ConfigError("alpha_bar must be strictly decreasing within (0, 1] (step " + std::to_string(t) + ")");
    }
  }
}

NoiseSchedule NoiseSchedule::scaled_linear(int total_steps, double beta_start, double beta_end) {
  if (total_steps < 1) throw ConfigError("total diffusion steps must be positive");
  if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end)) {
    throw ConfigError("beta range must satisfy 0 < start <= end < 1");
  }
  std::vector<double> ac(static_cast<std::size_t>(total_steps) + 1);
  ac[0] = 1.0;
  const double s0 = std::sqrt(beta_start), s1 = std::sqrt(beta_end);
  for (int t = 1; t <= total_steps; ++t) {
    const double frac = total_steps == 1 ? 0.0 : static_cast<double>(t - 1) / (total_steps - 1);
    const double s = s0 + (s1 - s0) * frac;
    ac[t] = ac[t - 1] * (1.0 - s * s);
  }
  return NoiseSchedule(std::move(ac));
}

NoiseSchedule NoiseSchedule::from_alphas_cumprod(std::vector<double> alphas_cumprod) {
  return NoiseSchedule(std::move(alphas_cumprod));
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t < 0 || t > total_steps()) {
    throw ValidationError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(total_steps()) + "]");
  }
  return alphas_cumprod_[static_cast<std::size_t>(t)];
}

}  // namespace dape
