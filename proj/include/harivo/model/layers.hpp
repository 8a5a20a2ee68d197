#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <optional>

namespace harivo::nn {

// Multi-head scaled dot-product attention on (N, L, heads * head_dim) operands.
// When `weights` is non-null it receives the (N, heads, Lq, Lk) softmax map.
torch::Tensor attention(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v, std::int64_t heads,
                        torch::Tensor* weights = nullptr);

// Sinusoidal embedding of integer positions / timesteps: (N) -> (N, dim).
torch::Tensor sinusoidal_embedding(const torch::Tensor& positions, std::int64_t dim);

class ResBlockImpl : public torch::nn::Module {
public:
    ResBlockImpl(std::int64_t in_ch, std::int64_t out_ch, std::int64_t temb_dim, std::int64_t groups);
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& temb);

private:
    torch::nn::GroupNorm norm1_{nullptr}, norm2_{nullptr};
    torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, skip_{nullptr};
    torch::nn::Linear temb_proj_{nullptr};
};
TORCH_MODULE(ResBlock);

struct SpatialAttentionMaps {
    torch::Tensor self_attn;   // (N, heads, hw, hw)
    torch::Tensor cross_attn;  // (N, heads, hw, M [+ K])
};

// Per-image transformer block: self-attention, cross-attention on text tokens and
// a gated cross-attention branch on frame-wise tokens, feed-forward.
// The frame-wise branch (parameters prefixed fw_) starts with a zero gate.
class SpatialTransformerImpl : public torch::nn::Module {
public:
    SpatialTransformerImpl(std::int64_t ch, std::int64_t heads, std::int64_t groups, std::int64_t context_dim,
                           bool framewise_branch);

    // context: (N, L, D) with the first `text_len` slots holding text tokens and
    // any remaining slots holding frame-wise tokens.
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& context, std::int64_t text_len,
                          SpatialAttentionMaps* maps = nullptr);

private:
    std::int64_t heads_;
    bool framewise_;
    torch::nn::GroupNorm norm_{nullptr};
    torch::nn::Conv2d proj_in_{nullptr}, proj_out_{nullptr};
    torch::nn::LayerNorm ln1_{nullptr}, ln2_{nullptr}, ln3_{nullptr};
    torch::nn::Linear sa_q_{nullptr}, sa_k_{nullptr}, sa_v_{nullptr}, sa_out_{nullptr};
    torch::nn::Linear ca_q_{nullptr}, ca_k_{nullptr}, ca_v_{nullptr}, ca_out_{nullptr};
    torch::nn::Linear fw_k_{nullptr}, fw_v_{nullptr};
    torch::Tensor fw_gate_;
    torch::nn::Linear ff1_{nullptr}, ff2_{nullptr};
};
TORCH_MODULE(SpatialTransformer);

// Attention over the frame axis at every spatial location:
// ((b f) c h w) -> ((b h w) f c) -> attention -> zero-initialized projection -> residual.
class TemporalLayerImpl : public torch::nn::Module {
public:
    TemporalLayerImpl(std::int64_t ch, std::int64_t heads);
    torch::Tensor forward(const torch::Tensor& x, std::int64_t frames);

private:
    std::int64_t ch_, heads_;
    torch::nn::LayerNorm norm_{nullptr};
    torch::nn::Linear q_{nullptr}, k_{nullptr}, v_{nullptr}, attn_out_{nullptr}, proj_out_{nullptr};
};
TORCH_MODULE(TemporalLayer);

class DownsampleImpl : public torch::nn::Module {
public:
    explicit DownsampleImpl(std::int64_t ch);
    torch::Tensor forward(const torch::Tensor& x) { return conv_(x); }

private:
    torch::nn::Conv2d conv_{nullptr};
};
TORCH_MODULE(Downsample);

class UpsampleImpl : public torch::nn::Module {
public:
    explicit UpsampleImpl(std::int64_t ch);
    torch::Tensor forward(const torch::Tensor& x);

private:
    torch::nn::Conv2d conv_{nullptr};
};
TORCH_MODULE(Upsample);

// ((b f) c h w) <-> (b c f h w)
torch::Tensor frames_to_video(const torch::Tensor& x, std::int64_t frames);
torch::Tensor video_to_frames(const torch::Tensor& x);

}  // namespace harivo::nn
