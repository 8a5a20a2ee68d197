#pragma once

#include "harivo/model/config.hpp"
#include "harivo/model/layers.hpp"
#include "harivo/model/mapping.hpp"
#include "harivo/model/projection.hpp"
#include "harivo/model/token_generator.hpp"

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace harivo {

// Per-frame conditioning. In full mode every frame sees the M text tokens
// followed by its own K frame-wise tokens; in image_only mode just the text.
struct TokenBundle {
    torch::Tensor per_frame;  // (B*F, M [+ K], D)
    torch::Tensor text;       // (B, M, D)
    Mode mode = Mode::full;
    std::int64_t frames = 0;
};

// Captured by a forward pass with capture enabled. Decoder layers are ordered
// from the bottleneck outwards: index 0 is layer i = 1.
struct AttentionRecord {
    std::vector<torch::Tensor> self_attn;   // each (B, F, heads, q, q)
    std::vector<torch::Tensor> cross_attn;  // each (B, F, heads, q, M [+ K])
    std::vector<std::array<std::int64_t, 2>> layer_hw;  // spatial size of each decoder layer
    torch::Tensor h;                        // (B, F, c_h, h_h, w_h)
};

struct ForwardResult {
    torch::Tensor eps;  // (B, F, C, H, W)
    std::optional<AttentionRecord> record;
};

enum class ParamGroup { spatial, temporal, mapping, token_gen, projection };
inline constexpr std::array<ParamGroup, 5> kParamGroups{ParamGroup::spatial, ParamGroup::temporal,
                                                        ParamGroup::mapping, ParamGroup::token_gen,
                                                        ParamGroup::projection};
const char* to_string(ParamGroup group);

using NamedTensors = std::vector<std::pair<std::string, torch::Tensor>>;

class T2VModelImpl : public torch::nn::Module {
public:
    explicit T2VModelImpl(ModelConfig config);

    const ModelConfig& config() const { return config_; }

    // (B, M) int64 token ids -> (B, M, D) through the frozen embedding table.
    torch::Tensor encode_text(const torch::Tensor& ids);

    TokenBundle generate_frame_tokens(const torch::Tensor& text_tokens, Mode mode);

    // x_t: (B, F, C, H, W); one timestep per clip.
    ForwardResult forward(const torch::Tensor& x_t, std::span<const std::int64_t> t, const TokenBundle& tokens,
                          Mode mode, bool capture = false);

    // The frozen text-to-image model on independent images: no mapping network,
    // no temporal layers. x: (N, C, H, W), t: (N), context: (N, L, D).
    torch::Tensor spatial_forward(const torch::Tensor& x, std::span<const std::int64_t> t,
                                  const torch::Tensor& context);

    torch::Tensor mapping_forward(const torch::Tensor& x);

    // One frame's bottleneck feature (c_h, h_h, w_h) -> z (c_h).
    torch::Tensor project_h(const torch::Tensor& h);
    // Batched: (N, c_h, h_h, w_h) -> (N, c_h).
    torch::Tensor project_h_batch(const torch::Tensor& h);

    NamedTensors group_parameters(ParamGroup group) const;
    // Everything except the spatial group.
    std::vector<torch::Tensor> trainable_parameters() const;
    std::vector<torch::Tensor> spatial_parameters() const;

    // Excludes the spatial group from gradient computation from now on.
    void freeze_spatial();
    bool spatial_frozen() const { return spatial_frozen_; }

private:
    struct Capture {
        std::vector<torch::Tensor> self_attn, cross_attn;
        std::vector<std::array<std::int64_t, 2>> hw;
        torch::Tensor h;
    };
    struct Level {
        std::vector<nn::ResBlock> res;
        std::vector<nn::SpatialTransformer> attn;  // empty on levels without attention
        std::vector<nn::TemporalLayer> temporal;
        nn::Downsample down{nullptr};
        nn::Upsample up{nullptr};
    };

    // frames == 0 bypasses the temporal layers.
    torch::Tensor run_unet(torch::Tensor x, std::span<const std::int64_t> t, const torch::Tensor& context,
                           std::int64_t frames, Capture* capture);

    ModelConfig config_;
    bool spatial_frozen_ = false;

    torch::nn::Embedding text_embed_{nullptr};
    torch::nn::Sequential time_embed_{nullptr};
    torch::nn::Conv2d conv_in_{nullptr}, conv_out_{nullptr};
    torch::nn::GroupNorm norm_out_{nullptr};
    std::vector<Level> down_, up_;
    nn::ResBlock mid_res1_{nullptr}, mid_res2_{nullptr};
    nn::SpatialTransformer mid_attn_{nullptr};
    nn::TemporalLayer mid_temporal_{nullptr};

    nn::MappingNetwork mapping_{nullptr};
    nn::TokenGenerator token_gen_{nullptr};
    nn::ProjectionHead projection_{nullptr};
};
TORCH_MODULE(T2VModel);

// Deterministic construction: the same (config, seed) yields bit-identical parameters.
T2VModel build_model(ModelConfig config, std::uint64_t seed);

// Group of a parameter by its registered name.
ParamGroup classify_parameter(const std::string& name);

// SHA-256 over the raw bytes of every parameter of a group, in registration order.
std::string hash_group(const T2VModel& model, ParamGroup group);

}  // namespace harivo
