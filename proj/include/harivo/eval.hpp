#pragma once

#include "harivo/diffusion.hpp"
#include "harivo/model/t2v_model.hpp"
#include "harivo/sampler.hpp"

#include "json.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

namespace harivo {

inline constexpr int kEvalSchemaVersion = 1;

// video: (F, C, H, W). Mean over consecutive pairs of the RMS difference,
// i.e. ||frame_j - frame_{j-1}||_2 / sqrt(C*H*W).
double smoothness_metric(const torch::Tensor& video);

// Per-frame bottleneck features (F, c_h*h_h*w_h) of a clip noised to t_probe.
// The same noise is used for every frame so only content differences remain.
torch::Tensor h_features(T2VModel& model, const torch::Tensor& video, const torch::Tensor& ids, std::int64_t t_probe,
                         const NoiseSchedule& schedule, std::uint64_t seed);

// Mean pairwise cosine similarity between rows (within one clip).
double mean_pairwise_cosine(const torch::Tensor& features);
// Mean cosine over all cross pairs of two clips' rows.
double mean_cross_cosine(const torch::Tensor& a, const torch::Tensor& b);

double h_consistency_metric(T2VModel& model, const torch::Tensor& video, const torch::Tensor& ids,
                            std::int64_t t_probe, const NoiseSchedule& schedule, std::uint64_t seed = 0);

struct VideoScore {
    std::string prompt;
    std::uint64_t seed = 0;
    double smoothness = 0.0;
    double h_consistency = 0.0;
};

struct EvalReport {
    double smoothness = 0.0;
    double h_consistency = 0.0;
    std::int64_t t_probe = 0;
    SamplerConfig sampler;
    std::vector<VideoScore> per_video;
};

// Samples each prompt (seed = sampler.seed + index) and scores it.
EvalReport evaluate(T2VModel& model, const std::vector<std::string>& prompts, const SamplerConfig& sampler,
                    const NoiseSchedule& schedule, std::int64_t t_probe);

nlohmann::json to_json(const EvalReport& report);

}  // namespace harivo
