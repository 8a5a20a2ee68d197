#pragma once

#include "harivo/losses.hpp"
#include "harivo/model/t2v_model.hpp"

#include "json.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace harivo {

// Directory layout:
//   metadata.json    config, seed, step, phase, group names, sha256 of every file
//   <group>.bin      one per parameter group, see below
//   queue.bin        negative queue
//   optimizer.pt     optional optimizer state (libtorch archive)
//
// Tensor file (little-endian): "HRVT" u32 version u32 count, then per tensor
// u32 name_len, name bytes, u8 dtype (0 f32, 1 f64, 2 i64), u32 rank,
// i64 dims[rank], row-major data.
// Queue file: "HRVQ" u32 version u64 capacity u64 count u64 dim, then per entry
// i64 video_id, f32 data[dim].
inline constexpr int kCheckpointVersion = 1;

struct CheckpointInfo {
    std::int64_t step = 0;
    std::string phase;  // "pretrain" or "train"
    nlohmann::json extra = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& dir, const T2VModel& model, const NegativeQueue& queue,
                     const CheckpointInfo& info, torch::optim::Optimizer* optimizer = nullptr);

struct LoadedCheckpoint {
    T2VModel model{nullptr};
    NegativeQueue queue;
    CheckpointInfo info;
    std::optional<std::filesystem::path> optimizer_state;
};

// Throws IntegrityError naming the offending file, ConfigMismatchError when
// `expected` is given and differs from the stored model config.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir,
                                 const std::optional<ModelConfig>& expected = std::nullopt);

void load_optimizer_state(torch::optim::Optimizer& optimizer, const std::filesystem::path& path);

// Tensor-file codec, exposed for tests.
std::vector<std::uint8_t> encode_tensors(const NamedTensors& tensors);
NamedTensors decode_tensors(const std::vector<std::uint8_t>& bytes, const std::string& what);

}  // namespace harivo
