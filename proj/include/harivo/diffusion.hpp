#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace harivo {

// beta/alpha/alpha_bar tables for a discrete diffusion process with T steps.
// Immutable after construction; timesteps are zero-based (0 .. T-1).
class NoiseSchedule {
public:
    static NoiseSchedule linear(std::int64_t T, double beta_start, double beta_end);

    // Defaults: T = 1000, linear betas 0.00085 .. 0.012.
    static NoiseSchedule standard() { return linear(1000, 0.00085, 0.012); }

    std::int64_t T() const { return static_cast<std::int64_t>(betas_.size()); }
    std::span<const double> betas() const { return betas_; }
    std::span<const double> alphas() const { return alphas_; }
    std::span<const double> alpha_bars() const { return alpha_bars_; }

    double beta(std::int64_t t) const;
    double alpha_bar(std::int64_t t) const;

    // The schedule's defining parameters, for serialization.
    double beta_start() const { return betas_.front(); }
    double beta_end() const { return betas_.back(); }

private:
    NoiseSchedule() = default;
    void check_timestep(std::int64_t t) const;

    std::vector<double> betas_;
    std::vector<double> alphas_;
    std::vector<double> alpha_bars_;
};

// Video tensors are (B, F, C, H, W). Throws ShapeError / NumericError.
void check_video(const torch::Tensor& x, std::string_view what);

// sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps
torch::Tensor q_sample(const torch::Tensor& x0, std::int64_t t, const torch::Tensor& eps,
                       const NoiseSchedule& schedule);
// Same, with one timestep per leading (batch) index.
torch::Tensor q_sample(const torch::Tensor& x0, std::span<const std::int64_t> t, const torch::Tensor& eps,
                       const NoiseSchedule& schedule);

// Inverse of q_sample given the noise: (x_t - sqrt(1 - abar_t) * eps) / sqrt(abar_t).
torch::Tensor predict_x0(const torch::Tensor& x_t, const torch::Tensor& eps_pred, std::int64_t t,
                         const NoiseSchedule& schedule);
torch::Tensor predict_x0(const torch::Tensor& x_t, const torch::Tensor& eps_pred, std::span<const std::int64_t> t,
                         const NoiseSchedule& schedule);

// One forward Markov step: sqrt(1 - beta_t) * x_prev + sqrt(beta_t) * eps.
torch::Tensor forward_step(const torch::Tensor& x_prev, std::int64_t t, const torch::Tensor& eps,
                           const NoiseSchedule& schedule);

// sqrt((1 - abar_t) / abar_t); scales the mitigating-gradient term.
double mg_omega(const NoiseSchedule& schedule, std::int64_t t);

}  // namespace harivo
