#pragma once

#include "harivo/diffusion.hpp"
#include "harivo/losses.hpp"
#include "harivo/model/config.hpp"
#include "harivo/sampler.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace harivo {

struct ScheduleConfig {
    std::int64_t T = 1000;
    double beta_start = 0.00085;
    double beta_end = 0.012;

    NoiseSchedule build() const { return NoiseSchedule::linear(T, beta_start, beta_end); }
    bool operator==(const ScheduleConfig&) const = default;
};

struct TrainConfig {
    std::int64_t pretrain_steps = 500;
    double pretrain_learning_rate = 1e-3;
    std::int64_t steps = 200;
    std::int64_t batch_size = 2;
    double learning_rate_start = 1e-4;
    double learning_rate_end = 1e-5;
    LossWeights weights;
    double temperature = kDefaultTemperature;
    double caption_dropout = 0.1;
    std::int64_t checkpoint_interval = 100;  // 0 disables intermediate checkpoints
    std::int64_t log_interval = 1;
    std::string output_dir = "runs/default";
    std::string init_checkpoint;  // train phase start; empty = <output_dir>/pretrained
    std::uint64_t seed = 0;

    // Linear decay from start to end across the step budget.
    double learning_rate_at(std::int64_t step) const;
    void validate() const;
};

struct DataConfig {
    std::string source = "synthetic";  // synthetic | manifest
    std::string manifest;              // relative paths resolve against the config file
    std::int64_t num_clips = 4;
    std::uint64_t seed = 0;
    std::int64_t eval_prompt_limit = 0;  // 0 = the whole caption grid
};

struct RunConfig {
    ModelConfig model;
    ScheduleConfig schedule;
    TrainConfig train;
    SamplerConfig sampler;
    DataConfig data;
    std::filesystem::path base_dir;  // directory of the config file

    std::filesystem::path output_dir() const;
    std::filesystem::path pretrained_dir() const;
    std::filesystem::path final_dir() const;
    std::filesystem::path resolve(const std::string& p) const;
};

nlohmann::json to_json(const RunConfig& config);
// Strict: unknown keys anywhere raise ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace harivo
