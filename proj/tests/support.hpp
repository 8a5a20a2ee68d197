#pragma once

#include "harivo/model/config.hpp"

#include <torch/torch.h>

#include <cmath>
#include <filesystem>
#include <string>

namespace harivo::testing {

// Small enough for unit tests to run in milliseconds: 8x8 frames, two
// attention levels (N = 2), bottleneck 2x2.
inline ModelConfig tiny_config(std::int64_t frames = 4) {
    ModelConfig c;
    c.height = 8;
    c.width = 8;
    c.frames = frames;
    c.max_tokens = 6;
    c.token_dim = 16;
    c.frame_tokens = 3;
    c.widths = {8, 16, 16};
    c.attention_start_level = 1;
    c.heads = 2;
    c.norm_groups = 4;
    c.mapping_hidden = 4;
    c.mapping_head_dim = 4;
    c.queue_capacity = 16;
    return c;
}

inline double max_abs_diff(const torch::Tensor& a, const torch::Tensor& b) {
    return (a - b).abs().max().item<double>();
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("harivo_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace harivo::testing
