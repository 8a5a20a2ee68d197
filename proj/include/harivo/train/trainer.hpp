#pragma once

#include "harivo/data/manifest.hpp"
#include "harivo/losses.hpp"
#include "harivo/model/t2v_model.hpp"
#include "harivo/train/checkpoint.hpp"
#include "harivo/train/run_config.hpp"
#include "harivo/util/files.hpp"

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

namespace harivo {

std::unique_ptr<ClipSource> make_dataset(const RunConfig& config);

// Everything random about one step, drawn up front from a generator seeded by
// (seed, step), so a resumed run draws the same batch as an uninterrupted one.
struct Batch {
    torch::Tensor x0;   // (B, F, C, H, W)
    torch::Tensor ids;  // (B, M), dropped captions replaced by eos
    torch::Tensor eps;  // like x0
    std::vector<std::int64_t> t;
    std::vector<std::int64_t> video_ids;
    std::vector<std::array<std::int64_t, 2>> pair;  // dc frames per clip
};

Batch draw_batch(const ClipSource& data, const ModelConfig& model, const NoiseSchedule& schedule,
                 std::int64_t batch_size, double caption_dropout, std::uint64_t seed, std::int64_t step);

struct PretrainResult {
    std::vector<double> losses;
};

// Trains only the spatial group with the simple loss on frames treated as
// independent images, then freezes it.
PretrainResult pretrain_spatial(T2VModel& model, const RunConfig& config, const ClipSource& data,
                                files::LineWriter* metrics = nullptr);

// The inflation phase: temporal layers, mapping network, frame-wise token
// generator and projection head with all losses.
class InflationTrainer {
public:
    InflationTrainer(const RunConfig& config, T2VModel model, NegativeQueue queue, std::int64_t step = 0);

    // Draws the batch for the current step and trains on it.
    LossBreakdown step(const ClipSource& data);
    LossBreakdown train_step(const Batch& batch);

    T2VModel& model() { return model_; }
    const NegativeQueue& queue() const { return queue_; }
    std::int64_t current_step() const { return step_; }
    torch::optim::Adam& optimizer() { return *optimizer_; }

    void save(const std::filesystem::path& dir);
    // Restores a checkpoint written by save(); the model config must match.
    static InflationTrainer resume(const RunConfig& config, const std::filesystem::path& dir);

private:
    RunConfig config_;
    NoiseSchedule schedule_;
    T2VModel model_;
    NegativeQueue queue_;
    std::int64_t step_;
    std::unique_ptr<torch::optim::Adam> optimizer_;
};

// Mean over a sliding window; result has values.size() - window + 1 entries.
std::vector<double> moving_average(const std::vector<double>& values, std::size_t window);

nlohmann::json to_json(const LossBreakdown& b);

}  // namespace harivo
