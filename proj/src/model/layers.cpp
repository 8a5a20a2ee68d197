#include "harivo/model/layers.hpp"

#include <cmath>

namespace harivo::nn {

namespace F = torch::nn::functional;

torch::Tensor attention(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v, std::int64_t heads,
                        torch::Tensor* weights) {
    const auto n = q.size(0);
    const auto lq = q.size(1);
    const auto lk = k.size(1);
    const auto inner = q.size(2);
    const auto head_dim = inner / heads;
    auto qh = q.reshape({n, lq, heads, head_dim}).transpose(1, 2);
    auto kh = k.reshape({n, lk, heads, head_dim}).transpose(1, 2);
    auto vh = v.reshape({n, lk, heads, head_dim}).transpose(1, 2);
    auto w = torch::softmax(torch::matmul(qh, kh.transpose(-1, -2)) / std::sqrt(static_cast<double>(head_dim)), -1);
    if (weights != nullptr) *weights = w;
    return torch::matmul(w, vh).transpose(1, 2).reshape({n, lq, inner});
}

torch::Tensor sinusoidal_embedding(const torch::Tensor& positions, std::int64_t dim) {
    const auto half = dim / 2;
    auto opts = torch::TensorOptions().dtype(torch::kFloat64);
    auto freqs = torch::exp(-std::log(10000.0) * torch::arange(half, opts) / static_cast<double>(half));
    auto args = positions.to(torch::kFloat64).unsqueeze(1) * freqs.unsqueeze(0);
    auto emb = torch::cat({torch::sin(args), torch::cos(args)}, 1);
    if (dim % 2 == 1) emb = torch::cat({emb, torch::zeros({emb.size(0), 1}, opts)}, 1);
    return emb;
}

ResBlockImpl::ResBlockImpl(std::int64_t in_ch, std::int64_t out_ch, std::int64_t temb_dim, std::int64_t groups) {
    norm1_ = register_module("norm1", torch::nn::GroupNorm(groups, in_ch));
    conv1_ = register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, out_ch, 3).padding(1)));
    temb_proj_ = register_module("temb_proj", torch::nn::Linear(temb_dim, out_ch));
    norm2_ = register_module("norm2", torch::nn::GroupNorm(groups, out_ch));
    conv2_ = register_module("conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(out_ch, out_ch, 3).padding(1)));
    if (in_ch != out_ch) {
        skip_ = register_module("skip", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, out_ch, 1)));
    }
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& temb) {
    auto h = conv1_(torch::silu(norm1_(x)));
    h = h + temb_proj_(torch::silu(temb)).unsqueeze(-1).unsqueeze(-1);
    h = conv2_(torch::silu(norm2_(h)));
    return (skip_ ? skip_(x) : x) + h;
}

SpatialTransformerImpl::SpatialTransformerImpl(std::int64_t ch, std::int64_t heads, std::int64_t groups,
                                               std::int64_t context_dim, bool framewise_branch)
    : heads_(heads), framewise_(framewise_branch) {
    using torch::nn::Linear;
    using torch::nn::LinearOptions;
    norm_ = register_module("norm", torch::nn::GroupNorm(groups, ch));
    proj_in_ = register_module("proj_in", torch::nn::Conv2d(torch::nn::Conv2dOptions(ch, ch, 1)));
    ln1_ = register_module("ln1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({ch})));
    ln2_ = register_module("ln2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({ch})));
    ln3_ = register_module("ln3", torch::nn::LayerNorm(torch::nn::LayerNormOptions({ch})));
    sa_q_ = register_module("sa_q", Linear(LinearOptions(ch, ch).bias(false)));
    sa_k_ = register_module("sa_k", Linear(LinearOptions(ch, ch).bias(false)));
    sa_v_ = register_module("sa_v", Linear(LinearOptions(ch, ch).bias(false)));
    sa_out_ = register_module("sa_out", Linear(ch, ch));
    ca_q_ = register_module("ca_q", Linear(LinearOptions(ch, ch).bias(false)));
    ca_k_ = register_module("ca_k", Linear(LinearOptions(context_dim, ch).bias(false)));
    ca_v_ = register_module("ca_v", Linear(LinearOptions(context_dim, ch).bias(false)));
    ca_out_ = register_module("ca_out", Linear(ch, ch));
    if (framewise_) {
        fw_k_ = register_module("fw_k", Linear(LinearOptions(context_dim, ch).bias(false)));
        fw_v_ = register_module("fw_v", Linear(LinearOptions(context_dim, ch).bias(false)));
        fw_gate_ = register_parameter("fw_gate", torch::zeros({1}));
    }
    ff1_ = register_module("ff1", Linear(ch, 4 * ch));
    ff2_ = register_module("ff2", Linear(4 * ch, ch));
    proj_out_ = register_module("proj_out", torch::nn::Conv2d(torch::nn::Conv2dOptions(ch, ch, 1)));
}

torch::Tensor SpatialTransformerImpl::forward(const torch::Tensor& x, const torch::Tensor& context,
                                              std::int64_t text_len, SpatialAttentionMaps* maps) {
    const auto n = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
    auto tokens = proj_in_(norm_(x)).flatten(2).transpose(1, 2);  // (n, hw, c)

    torch::Tensor self_w;
    auto y = ln1_(tokens);
    tokens = tokens + sa_out_(attention(sa_q_(y), sa_k_(y), sa_v_(y), heads_, maps ? &self_w : nullptr));

    y = ln2_(tokens);
    auto q = ca_q_(y);
    auto text = context.narrow(1, 0, text_len);
    torch::Tensor text_w;
    auto cross = attention(q, ca_k_(text), ca_v_(text), heads_, maps ? &text_w : nullptr);
    torch::Tensor cross_w = text_w;
    const auto extra = context.size(1) - text_len;
    if (framewise_ && extra > 0) {
        auto fw = context.narrow(1, text_len, extra);
        torch::Tensor fw_w;
        cross = cross + fw_gate_ * attention(q, fw_k_(fw), fw_v_(fw), heads_, maps ? &fw_w : nullptr);
        if (maps) cross_w = torch::cat({text_w, fw_w}, -1);
    }
    tokens = tokens + ca_out_(cross);

    tokens = tokens + ff2_(F::gelu(ff1_(ln3_(tokens))));
    if (maps) {
        maps->self_attn = self_w;
        maps->cross_attn = cross_w;
    }
    return x + proj_out_(tokens.transpose(1, 2).reshape({n, c, h, w}));
}

TemporalLayerImpl::TemporalLayerImpl(std::int64_t ch, std::int64_t heads) : ch_(ch), heads_(heads) {
    using torch::nn::Linear;
    using torch::nn::LinearOptions;
    norm_ = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({ch})));
    q_ = register_module("q", Linear(LinearOptions(ch, ch).bias(false)));
    k_ = register_module("k", Linear(LinearOptions(ch, ch).bias(false)));
    v_ = register_module("v", Linear(LinearOptions(ch, ch).bias(false)));
    attn_out_ = register_module("attn_out", Linear(ch, ch));
    proj_out_ = register_module("proj_out", Linear(ch, ch));
    torch::NoGradGuard no_grad;
    proj_out_->weight.zero_();
    proj_out_->bias.zero_();
}

torch::Tensor TemporalLayerImpl::forward(const torch::Tensor& x, std::int64_t frames) {
    const auto bf = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
    const auto b = bf / frames;
    // ((b f) c h w) -> ((b h w) f c)
    auto seq = x.reshape({b, frames, c, h, w}).permute({0, 3, 4, 1, 2}).reshape({b * h * w, frames, c});
    auto pos = sinusoidal_embedding(torch::arange(frames), ch_).to(x.scalar_type());
    auto y = norm_(seq) + pos.unsqueeze(0);
    auto out = proj_out_(attn_out_(attention(q_(y), k_(y), v_(y), heads_)));
    out = out + seq;
    return out.reshape({b, h, w, frames, c}).permute({0, 3, 4, 1, 2}).reshape({bf, c, h, w});
}

DownsampleImpl::DownsampleImpl(std::int64_t ch) {
    conv_ = register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(ch, ch, 3).stride(2).padding(1)));
}

UpsampleImpl::UpsampleImpl(std::int64_t ch) {
    conv_ = register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(ch, ch, 3).padding(1)));
}

torch::Tensor UpsampleImpl::forward(const torch::Tensor& x) {
    auto up = F::interpolate(x, F::InterpolateFuncOptions()
                                    .scale_factor(std::vector<double>{2.0, 2.0})
                                    .mode(torch::kNearest));
    return conv_(up);
}

torch::Tensor frames_to_video(const torch::Tensor& x, std::int64_t frames) {
    const auto bf = x.size(0);
    return x.reshape({bf / frames, frames, x.size(1), x.size(2), x.size(3)}).permute({0, 2, 1, 3, 4});
}

torch::Tensor video_to_frames(const torch::Tensor& x) {
    const auto b = x.size(0), c = x.size(1), f = x.size(2);
    return x.permute({0, 2, 1, 3, 4}).reshape({b * f, c, x.size(3), x.size(4)});
}

}  // namespace harivo::nn
