#include "harivo/model/config.hpp"

#include "harivo/data/vocab.hpp"
#include "harivo/errors.hpp"

#include <algorithm>
#include <string>

namespace harivo {

const char* to_string(Mode mode) { return mode == Mode::full ? "full" : "image_only"; }

std::int64_t ModelConfig::decoder_attention_layers() const {
    const std::int64_t attn_levels = std::max<std::int64_t>(0, levels() - attention_start_level);
    return attn_levels * decoder_blocks_per_level;
}

std::int64_t ModelConfig::bottleneck_height() const { return height >> (levels() - 1); }
std::int64_t ModelConfig::bottleneck_width() const { return width >> (levels() - 1); }

std::int64_t ModelConfig::effective_vocab_size() const {
    return vocab_size > 0 ? vocab_size : static_cast<std::int64_t>(Vocabulary::builtin().size());
}

void ModelConfig::validate() const {
    auto require = [](bool ok, const std::string& what) {
        if (!ok) throw ParameterError("invalid model config: " + what);
    };
    require(height > 0 && width > 0, "H and W must be positive");
    require(channels >= 1, "C >= 1");
    require(frames >= 1, "F >= 1");
    require(max_tokens >= 1, "M >= 1");
    require(token_dim >= 1, "D >= 1");
    require(frame_tokens >= 0, "K >= 0");
    require(!widths.empty(), "at least one U-Net level");
    require(attention_start_level >= 0 && attention_start_level < levels(),
            "attention_start_level must name an existing level");
    require(decoder_blocks_per_level >= 1, "decoder_blocks_per_level >= 1");
    require(decoder_attention_layers() >= 1, "N >= 1 decoder self-attention layers");
    require(heads >= 1 && norm_groups >= 1, "heads and norm_groups >= 1");
    for (auto w : widths) {
        require(w > 0 && w % norm_groups == 0, "every width must be a positive multiple of norm_groups");
        require(w % heads == 0, "every width must be divisible by heads");
    }
    const std::int64_t scale = std::int64_t{1} << (levels() - 1);
    require(height % scale == 0 && width % scale == 0, "H and W must be divisible by 2^(levels-1)");
    require(mapping_hidden >= 1 && mapping_heads >= 1 && mapping_head_dim >= 1, "mapping network dims >= 1");
    require(queue_capacity >= 1, "queue_capacity >= 1");
    require(effective_vocab_size() >= 1, "vocabulary must not be empty");
}

nlohmann::json to_json(const ModelConfig& c) {
    return {
        {"height", c.height},
        {"width", c.width},
        {"channels", c.channels},
        {"frames", c.frames},
        {"max_tokens", c.max_tokens},
        {"token_dim", c.token_dim},
        {"frame_tokens", c.frame_tokens},
        {"vocab_size", c.vocab_size},
        {"widths", c.widths},
        {"attention_start_level", c.attention_start_level},
        {"decoder_blocks_per_level", c.decoder_blocks_per_level},
        {"heads", c.heads},
        {"norm_groups", c.norm_groups},
        {"mapping_hidden", c.mapping_hidden},
        {"mapping_heads", c.mapping_heads},
        {"mapping_head_dim", c.mapping_head_dim},
        {"queue_capacity", c.queue_capacity},
        {"seed", c.seed},
    };
}

void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const char* section) {
    if (!j.is_object()) throw ConfigError(std::string(section) + ": expected a JSON object");
    for (const auto& [key, _] : j.items()) {
        bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
        if (!known) throw ConfigError(std::string(section) + ": unknown key '" + key + "'");
    }
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    reject_unknown_keys(j,
                        {"height", "width", "channels", "frames", "max_tokens", "token_dim", "frame_tokens",
                         "vocab_size", "widths", "attention_start_level", "decoder_blocks_per_level", "heads",
                         "norm_groups", "mapping_hidden", "mapping_heads", "mapping_head_dim", "queue_capacity",
                         "seed"},
                        "model");
    ModelConfig c;
    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) j.at(key).get_to(field);
        };
        get("height", c.height);
        get("width", c.width);
        get("channels", c.channels);
        get("frames", c.frames);
        get("max_tokens", c.max_tokens);
        get("token_dim", c.token_dim);
        get("frame_tokens", c.frame_tokens);
        get("vocab_size", c.vocab_size);
        get("widths", c.widths);
        get("attention_start_level", c.attention_start_level);
        get("decoder_blocks_per_level", c.decoder_blocks_per_level);
        get("heads", c.heads);
        get("norm_groups", c.norm_groups);
        get("mapping_hidden", c.mapping_hidden);
        get("mapping_heads", c.mapping_heads);
        get("mapping_head_dim", c.mapping_head_dim);
        get("queue_capacity", c.queue_capacity);
        get("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model: ") + e.what());
    }
    c.validate();
    return c;
}

}  // namespace harivo
