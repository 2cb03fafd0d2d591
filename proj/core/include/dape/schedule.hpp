#pragma once

#include <vector>

namespace dape {

/// Cumulative signal fractions alpha_bar[0..T]; alpha_bar[0] = 1, strictly decreasing.
class NoiseSchedule {
 public:
  /// Stable-Diffusion style "scaled linear" betas: (linspace(sqrt(b0), sqrt(b1), T))^2.
  static NoiseSchedule scaled_linear(int total_steps, double beta_start = 0.00085, double beta_end = 0.012);
  static NoiseSchedule from_alphas_cumprod(std::vector<double> alphas_cumprod);

  int total_steps() const noexcept { return static_cast<int>(alphas_cumprod_.size()) - 1; }
  double alpha_bar(int t) const;
  const std::vector<double>& alphas_cumprod() const noexcept { return alphas_cumprod_; }

 private:
  explicit NoiseSchedule(std::vector<double> alphas_cumprod);

  std::vector<double> alphas_cumprod_;
};

}  // namespace dape
