#pragma once

#include <torch/torch.h>

#include <cstdint>

namespace harivo::nn {

// Learned block in front of the U-Net that reshapes the IID noise prior across
// frames. On (B, F, C, H, W):
//   r   = conv3d residual branch over (f, h, w)      (last conv zero-initialized)
//   a   = proj_out(temporal_attn(norm(r)))            (proj_out zero-initialized)
//   out = x + r + a
// so the network is an exact identity at initialization.
class MappingNetworkImpl : public torch::nn::Module {
public:
    MappingNetworkImpl(std::int64_t channels, std::int64_t hidden, std::int64_t heads, std::int64_t head_dim);
    torch::Tensor forward(const torch::Tensor& x);

private:
    std::int64_t channels_, heads_;
    torch::nn::Conv3d conv_in_{nullptr}, conv_out_{nullptr};
    torch::nn::LayerNorm temporal_norm_{nullptr};
    torch::nn::Linear attn_q_{nullptr}, attn_k_{nullptr}, attn_v_{nullptr}, attn_out_{nullptr};
    torch::nn::Linear proj_out_{nullptr};
};
TORCH_MODULE(MappingNetwork);

}  // namespace harivo::nn
