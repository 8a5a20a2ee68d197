#include "harivo/model/mapping.hpp"

#include "harivo/errors.hpp"
#include "harivo/model/layers.hpp"

namespace harivo::nn {

MappingNetworkImpl::MappingNetworkImpl(std::int64_t channels, std::int64_t hidden, std::int64_t heads,
                                       std::int64_t head_dim)
    : channels_(channels), heads_(heads) {
    using torch::nn::Conv3dOptions;
    using torch::nn::Linear;
    using torch::nn::LinearOptions;
    const auto inner = heads * head_dim;
    conv_in_ = register_module("conv_in", torch::nn::Conv3d(Conv3dOptions(channels, hidden, 3).padding(1)));
    conv_out_ = register_module("conv_out", torch::nn::Conv3d(Conv3dOptions(hidden, channels, 3).padding(1)));
    temporal_norm_ = register_module("temporal_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({channels})));
    attn_q_ = register_module("attn_q", Linear(LinearOptions(channels, inner).bias(false)));
    attn_k_ = register_module("attn_k", Linear(LinearOptions(channels, inner).bias(false)));
    attn_v_ = register_module("attn_v", Linear(LinearOptions(channels, inner).bias(false)));
    attn_out_ = register_module("attn_out", Linear(inner, channels));
    proj_out_ = register_module("proj_out", Linear(channels, channels));

    torch::NoGradGuard no_grad;
    conv_out_->weight.zero_();
    conv_out_->bias.zero_();
    proj_out_->weight.zero_();
    proj_out_->bias.zero_();
}

torch::Tensor MappingNetworkImpl::forward(const torch::Tensor& x) {
    if (x.dim() != 5 || x.size(2) != channels_) {
        throw ShapeError("mapping network expects (B, F, " + std::to_string(channels_) + ", H, W)");
    }
    const auto b = x.size(0), f = x.size(1), c = x.size(2), h = x.size(3), w = x.size(4);
    auto vid = x.permute({0, 2, 1, 3, 4});  // b c f h w
    auto r = conv_out_(torch::silu(conv_in_(vid)));
    // (b c f h w) -> ((b h w) f c)
    auto seq = r.permute({0, 3, 4, 2, 1}).reshape({b * h * w, f, c});
    auto y = temporal_norm_(seq);
    auto a = proj_out_(attn_out_(attention(attn_q_(y), attn_k_(y), attn_v_(y), heads_)));
    auto branch = (a + seq).reshape({b, h, w, f, c}).permute({0, 3, 4, 1, 2});  // b f c h w
    return x + branch;
}

}  // namespace harivo::nn
