#pragma once

#include "harivo/data/vocab.hpp"
#include "harivo/diffusion.hpp"
#include "harivo/model/t2v_model.hpp"
#include "harivo/util/files.hpp"

#include "json.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace harivo {

struct SamplerConfig {
    std::int64_t steps = 25;
    double cfg_high = 12.5;
    double cfg_low = 7.5;
    double cfg_switch_fraction = 0.7;
    double mg_alpha = 40.0;
    double eta = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const SamplerConfig&) const = default;
};

nlohmann::json to_json(const SamplerConfig& config);
SamplerConfig sampler_config_from_json(const nlohmann::json& j);

// cfg_high while t >= switch * T (the noisy end), cfg_low afterwards.
double cfg_scale_at(const SamplerConfig& config, std::int64_t t, std::int64_t T);

// u + scale * (c - u) with both predictions from a full-mode forward.
torch::Tensor cfg_eps(T2VModel& model, const torch::Tensor& x_t, std::int64_t t, const TokenBundle& cond,
                      const TokenBundle& uncond, double scale);
// The combination alone.
torch::Tensor cfg_combine(const torch::Tensor& eps_uncond, const torch::Tensor& eps_cond, double scale);

// Mitigating-gradient guidance on eps_pred (B, F, C, H, W). The first frame is
// never modified. mean_abs_g, when given, receives the mean |G| over guided frames.
torch::Tensor mg_guidance(const torch::Tensor& eps_pred, const torch::Tensor& x_t, std::int64_t t,
                          const NoiseSchedule& schedule, double alpha, double* mean_abs_g = nullptr);

// Deterministic for eta = 0. t_prev = -1 denotes the clean end (abar = 1),
// where the step returns x0_hat. gen supplies the eta > 0 noise.
torch::Tensor ddim_step(const torch::Tensor& x_t, const torch::Tensor& eps_pred, std::int64_t t,
                        std::int64_t t_prev, const NoiseSchedule& schedule, double eta = 0.0,
                        std::optional<at::Generator> gen = std::nullopt);

// Descending uniform subsequence i * (T / steps), i = steps-1 .. 0.
std::vector<std::int64_t> ddim_timesteps(std::int64_t T, std::int64_t steps);

// ids: (B, M) caption token ids. Returns (B, F, C, H, W) clamped to [-1, 1].
// trace, when given, receives one JSON line per step.
torch::Tensor sample_video(T2VModel& model, const torch::Tensor& ids, const SamplerConfig& config,
                           const NoiseSchedule& schedule, files::LineWriter* trace = nullptr);
torch::Tensor sample_video(T2VModel& model, std::string_view caption, const Vocabulary& vocab,
                           const SamplerConfig& config, const NoiseSchedule& schedule,
                           files::LineWriter* trace = nullptr);

}  // namespace harivo
