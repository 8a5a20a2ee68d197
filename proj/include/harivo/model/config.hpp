#pragma once

#include "json.hpp"

#include <cstdint>
#include <vector>

namespace harivo {

// full: mapping network + spatial layers + temporal layers + frame-wise tokens.
// image_only: mapping network + spatial layers, temporal layers bypassed, text tokens only.
enum class Mode { full, image_only };

const char* to_string(Mode mode);

struct ModelConfig {
    std::int64_t height = 32;
    std::int64_t width = 32;
    std::int64_t channels = 3;
    std::int64_t frames = 8;        // F
    std::int64_t max_tokens = 16;   // M
    std::int64_t token_dim = 64;    // D
    std::int64_t frame_tokens = 3;  // K
    std::int64_t vocab_size = 0;    // 0 = size of the built-in caption vocabulary

    // One entry per U-Net resolution level; level l runs at H / 2^l.
    std::vector<std::int64_t> widths{32, 64, 64};
    // Levels >= this index (and the bottleneck) carry spatial self/cross attention.
    std::int64_t attention_start_level = 1;
    std::int64_t decoder_blocks_per_level = 1;
    std::int64_t heads = 2;
    std::int64_t norm_groups = 8;

    std::int64_t mapping_hidden = 16;
    std::int64_t mapping_heads = 1;
    std::int64_t mapping_head_dim = 16;

    std::int64_t queue_capacity = 512;
    std::uint64_t seed = 0;

    // Number of decoder self-attention layers (the TRS loss sums over these).
    std::int64_t decoder_attention_layers() const;
    std::int64_t levels() const { return static_cast<std::int64_t>(widths.size()); }
    std::int64_t bottleneck_height() const;
    std::int64_t bottleneck_width() const;
    std::int64_t bottleneck_channels() const { return widths.back(); }
    std::int64_t effective_vocab_size() const;

    // Throws ParameterError on any violated invariant.
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

// Strict conversions: unknown keys are rejected with ConfigError.
nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Throws ConfigError naming the first key of `j` not present in `allowed`.
void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const char* section);

}  // namespace harivo
