#pragma once

#include "json.hpp"

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace harivo {

enum class NoiseKind { iid, correlated };
const char* to_string(NoiseKind kind);
NoiseKind noise_kind_from_string(const std::string& s);

struct NoiseSpec {
    NoiseKind kind = NoiseKind::iid;
    std::array<std::int64_t, 4> shape{8, 3, 32, 32};  // F, C, H, W
    double shared_weight = 0.5;                       // correlated only
    std::uint64_t seed = 0;

    void validate() const;
};

// (1, F, C, H, W) float64. Correlated: sqrt(w) * shared + sqrt(1 - w) * per-frame.
torch::Tensor sample_noise(const NoiseSpec& spec);
torch::Tensor sample_noise(const NoiseSpec& spec, at::Generator& gen);

struct JarqueBera {
    double statistic = 0.0;
    double p_value = 0.0;
};

// n/6 * (skew^2 + excess_kurtosis^2 / 4); p from the chi-square(2) tail.
JarqueBera jarque_bera(const torch::Tensor& sample);
JarqueBera jarque_bera(const std::vector<double>& sample);

struct GaussianityResult {
    NoiseSpec spec;
    std::int64_t n_trials = 0;
    double pass_rate = 0.0;
    double mean_statistic = 0.0;
    std::vector<JarqueBera> trials;
};

inline constexpr double kGaussianityThreshold = 0.05;

// Trial i draws from a generator seeded by (spec.seed, i), so results do not
// depend on the order trials run in.
GaussianityResult gaussianity_experiment(const NoiseSpec& spec, std::int64_t n_trials);

nlohmann::json to_json(const GaussianityResult& result);
void write_trials_csv(const std::filesystem::path& path, const GaussianityResult& result);

}  // namespace harivo
