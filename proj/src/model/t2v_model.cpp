#include "harivo/model/t2v_model.hpp"

#include "harivo/diffusion.hpp"
#include "harivo/errors.hpp"
#include "harivo/util/files.hpp"

#include <cstring>

namespace harivo {

const char* to_string(ParamGroup group) {
    switch (group) {
        case ParamGroup::spatial: return "spatial";
        case ParamGroup::temporal: return "temporal";
        case ParamGroup::mapping: return "mapping";
        case ParamGroup::token_gen: return "token_gen";
        case ParamGroup::projection: return "projection";
    }
    return "?";
}

ParamGroup classify_parameter(const std::string& name) {
    const auto first = name.substr(0, name.find('.'));
    if (first == "mapping") return ParamGroup::mapping;
    if (first == "token_gen") return ParamGroup::token_gen;
    if (first == "projection") return ParamGroup::projection;
    if (first.starts_with("temporal")) return ParamGroup::temporal;
    // gated frame-wise cross-attention branches live inside the spatial blocks
    std::size_t pos = 0;
    while (pos != std::string::npos) {
        if (name.compare(pos, 3, "fw_") == 0) return ParamGroup::token_gen;
        pos = name.find('.', pos);
        if (pos != std::string::npos) ++pos;
    }
    return ParamGroup::spatial;
}

T2VModelImpl::T2VModelImpl(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    const auto& c = config_;
    const auto levels = c.levels();
    const auto w0 = c.widths.front();
    const auto temb_dim = 4 * w0;
    const bool framewise = c.frame_tokens > 0;

    text_embed_ = register_module("text_embed", torch::nn::Embedding(c.effective_vocab_size(), c.token_dim));
    time_embed_ = register_module("time_embed", torch::nn::Sequential(torch::nn::Linear(w0, temb_dim),
                                                                        torch::nn::SiLU(),
                                                                        torch::nn::Linear(temb_dim, temb_dim)));
    conv_in_ = register_module("conv_in", torch::nn::Conv2d(torch::nn::Conv2dOptions(c.channels, w0, 3).padding(1)));

    auto attn_at = [&](std::int64_t level) { return level >= c.attention_start_level; };
    auto make_attn = [&](std::int64_t ch) {
        return nn::SpatialTransformer(ch, c.heads, c.norm_groups, c.token_dim, framewise);
    };

    std::int64_t ch = w0;
    down_.resize(levels);
    for (std::int64_t l = 0; l < levels; ++l) {
        auto& lv = down_[l];
        const auto out = c.widths[l];
        const auto tag = "down" + std::to_string(l);
        lv.res.push_back(register_module(tag + "_res0", nn::ResBlock(ch, out, temb_dim, c.norm_groups)));
        if (attn_at(l)) lv.attn.push_back(register_module(tag + "_attn0", make_attn(out)));
        lv.temporal.push_back(register_module("temporal_" + tag + "_0", nn::TemporalLayer(out, c.heads)));
        if (l + 1 < levels) lv.down = register_module(tag + "_downsample", nn::Downsample(out));
        ch = out;
    }

    mid_res1_ = register_module("mid_res1", nn::ResBlock(ch, ch, temb_dim, c.norm_groups));
    mid_attn_ = register_module("mid_attn", make_attn(ch));
    mid_temporal_ = register_module("temporal_mid", nn::TemporalLayer(ch, c.heads));
    mid_res2_ = register_module("mid_res2", nn::ResBlock(ch, ch, temb_dim, c.norm_groups));

    up_.resize(levels);
    for (std::int64_t l = levels - 1; l >= 0; --l) {
        auto& lv = up_[l];
        const auto out = c.widths[l];
        const auto tag = "up" + std::to_string(l);
        for (std::int64_t b = 0; b < c.decoder_blocks_per_level; ++b) {
            const auto in = b == 0 ? ch + out : out;
            const auto suffix = std::to_string(b);
            lv.res.push_back(register_module(tag + "_res" + suffix, nn::ResBlock(in, out, temb_dim, c.norm_groups)));
            if (attn_at(l)) lv.attn.push_back(register_module(tag + "_attn" + suffix, make_attn(out)));
            lv.temporal.push_back(
                register_module("temporal_" + tag + "_" + suffix, nn::TemporalLayer(out, c.heads)));
        }
        if (l > 0) lv.up = register_module(tag + "_upsample", nn::Upsample(out));
        ch = out;
    }

    norm_out_ = register_module("norm_out", torch::nn::GroupNorm(c.norm_groups, w0));
    conv_out_ = register_module("conv_out", torch::nn::Conv2d(torch::nn::Conv2dOptions(w0, c.channels, 3).padding(1)));

    mapping_ = register_module("mapping",
                               nn::MappingNetwork(c.channels, c.mapping_hidden, c.mapping_heads, c.mapping_head_dim));
    token_gen_ = register_module("token_gen",
                                 nn::TokenGenerator(c.token_dim, c.max_tokens, c.frame_tokens, c.frames));
    projection_ = register_module("projection", nn::ProjectionHead(c.bottleneck_channels(), c.bottleneck_height(),
                                                                   c.bottleneck_width()));
}

torch::Tensor T2VModelImpl::encode_text(const torch::Tensor& ids) {
    if (ids.dim() != 2 || ids.size(1) != config_.max_tokens) {
        throw ShapeError("token ids must be (B, M) with M = " + std::to_string(config_.max_tokens));
    }
    return text_embed_(ids);
}

TokenBundle T2VModelImpl::generate_frame_tokens(const torch::Tensor& text_tokens, Mode mode) {
    const auto& c = config_;
    if (text_tokens.dim() != 3 || text_tokens.size(1) != c.max_tokens || text_tokens.size(2) != c.token_dim) {
        throw ShapeError("text tokens must be (B, " + std::to_string(c.max_tokens) + ", " +
                         std::to_string(c.token_dim) + ")");
    }
    const auto b = text_tokens.size(0);
    auto repeated = text_tokens.unsqueeze(1).expand({b, c.frames, c.max_tokens, c.token_dim});
    TokenBundle bundle;
    bundle.text = text_tokens;
    bundle.mode = mode;
    bundle.frames = c.frames;
    if (mode == Mode::full && c.frame_tokens > 0) {
        auto fw = token_gen_(text_tokens);  // (B, F, K, D)
        bundle.per_frame = torch::cat({repeated, fw}, 2).reshape({b * c.frames, c.max_tokens + c.frame_tokens,
                                                                  c.token_dim});
    } else {
        bundle.per_frame = repeated.reshape({b * c.frames, c.max_tokens, c.token_dim});
    }
    return bundle;
}

torch::Tensor T2VModelImpl::run_unet(torch::Tensor x, std::span<const std::int64_t> t, const torch::Tensor& context,
                                     std::int64_t frames, Capture* capture) {
    const auto& c = config_;
    auto t_tensor = torch::tensor(std::vector<std::int64_t>(t.begin(), t.end()), torch::kInt64);
    auto temb = time_embed_->forward(nn::sinusoidal_embedding(t_tensor, c.widths.front()).to(x.scalar_type()));
    const auto text_len = c.max_tokens;

    auto temporal = [&](nn::TemporalLayer& layer, const torch::Tensor& h) {
        return frames > 0 ? layer(h, frames) : h;
    };

    x = conv_in_(x);
    std::vector<torch::Tensor> skips;
    for (auto& lv : down_) {
        x = lv.res[0](x, temb);
        if (!lv.attn.empty()) x = lv.attn[0](x, context, text_len);
        x = temporal(lv.temporal[0], x);
        skips.push_back(x);
        if (lv.down) x = lv.down(x);
    }

    x = mid_res1_(x, temb);
    x = mid_attn_(x, context, text_len);
    x = temporal(mid_temporal_, x);
    x = mid_res2_(x, temb);
    if (capture) capture->h = x;

    for (auto l = static_cast<std::int64_t>(up_.size()) - 1; l >= 0; --l) {
        auto& lv = up_[l];
        for (std::size_t b = 0; b < lv.res.size(); ++b) {
            if (b == 0) {
                x = torch::cat({x, skips.back()}, 1);
                skips.pop_back();
            }
            x = lv.res[b](x, temb);
            if (!lv.attn.empty()) {
                nn::SpatialAttentionMaps maps;
                x = lv.attn[b](x, context, text_len, capture ? &maps : nullptr);
                if (capture) {
                    capture->self_attn.push_back(maps.self_attn);
                    capture->cross_attn.push_back(maps.cross_attn);
                    capture->hw.push_back({x.size(2), x.size(3)});
                }
            }
            x = temporal(lv.temporal[b], x);
        }
        if (lv.up) x = lv.up(x);
    }
    return conv_out_(torch::silu(norm_out_(x)));
}

ForwardResult T2VModelImpl::forward(const torch::Tensor& x_t, std::span<const std::int64_t> t,
                                    const TokenBundle& tokens, Mode mode, bool capture) {
    const auto& c = config_;
    if (x_t.dim() != 5 || x_t.size(1) != c.frames || x_t.size(2) != c.channels || x_t.size(3) != c.height ||
        x_t.size(4) != c.width) {
        throw ShapeError("forward expects x_t of shape (B, " + std::to_string(c.frames) + ", " +
                         std::to_string(c.channels) + ", " + std::to_string(c.height) + ", " +
                         std::to_string(c.width) + ")");
    }
    const auto b = x_t.size(0);
    if (static_cast<std::int64_t>(t.size()) != b) throw ShapeError("forward needs one timestep per clip");
    if (tokens.mode != mode) {
        throw ParameterError(std::string("token bundle built for ") + to_string(tokens.mode) + " mode used in " +
                             to_string(mode) + " forward");
    }
    const auto expected_len = c.max_tokens + (mode == Mode::full ? c.frame_tokens : 0);
    if (!tokens.per_frame.defined() || tokens.per_frame.dim() != 3 || tokens.per_frame.size(0) != b * c.frames ||
        tokens.per_frame.size(1) != expected_len) {
        throw ParameterError("token bundle does not match the batch or mode");
    }

    auto mapped = mapping_(x_t);
    auto frames = mapped.reshape({b * c.frames, c.channels, c.height, c.width});
    std::vector<std::int64_t> t_frames;
    t_frames.reserve(static_cast<std::size_t>(b * c.frames));
    for (auto ti : t) t_frames.insert(t_frames.end(), static_cast<std::size_t>(c.frames), ti);

    Capture cap;
    auto eps = run_unet(frames, t_frames, tokens.per_frame, mode == Mode::full ? c.frames : 0,
                        capture ? &cap : nullptr);

    ForwardResult result;
    result.eps = eps.reshape(x_t.sizes());
    if (capture) {
        AttentionRecord rec;
        auto split = [&](const torch::Tensor& m) {
            std::vector<std::int64_t> shape{b, c.frames};
            for (std::int64_t d = 1; d < m.dim(); ++d) shape.push_back(m.size(d));
            return m.reshape(shape);
        };
        for (auto& m : cap.self_attn) rec.self_attn.push_back(split(m));
        for (auto& m : cap.cross_attn) rec.cross_attn.push_back(split(m));
        rec.layer_hw = cap.hw;
        rec.h = split(cap.h);
        result.record = std::move(rec);
    }
    return result;
}

torch::Tensor T2VModelImpl::spatial_forward(const torch::Tensor& x, std::span<const std::int64_t> t,
                                            const torch::Tensor& context) {
    const auto& c = config_;
    if (x.dim() != 4 || x.size(1) != c.channels || x.size(2) != c.height || x.size(3) != c.width) {
        throw ShapeError("spatial forward expects (N, C, H, W) frames matching the config");
    }
    if (static_cast<std::int64_t>(t.size()) != x.size(0) || context.size(0) != x.size(0)) {
        throw ShapeError("spatial forward needs one timestep and one context per image");
    }
    return run_unet(x, t, context, 0, nullptr);
}

torch::Tensor T2VModelImpl::mapping_forward(const torch::Tensor& x) { return mapping_(x); }

torch::Tensor T2VModelImpl::project_h(const torch::Tensor& h) {
    if (h.dim() != 3) throw ShapeError("project_h expects one frame's (c_h, h_h, w_h) feature");
    return projection_(h.unsqueeze(0)).squeeze(0);
}

torch::Tensor T2VModelImpl::project_h_batch(const torch::Tensor& h) { return projection_(h); }

NamedTensors T2VModelImpl::group_parameters(ParamGroup group) const {
    NamedTensors out;
    for (const auto& item : named_parameters(/*recurse=*/true)) {
        if (classify_parameter(item.key()) == group) out.emplace_back(item.key(), item.value());
    }
    return out;
}

std::vector<torch::Tensor> T2VModelImpl::trainable_parameters() const {
    std::vector<torch::Tensor> out;
    for (const auto& item : named_parameters(true)) {
        if (classify_parameter(item.key()) != ParamGroup::spatial) out.push_back(item.value());
    }
    return out;
}

std::vector<torch::Tensor> T2VModelImpl::spatial_parameters() const {
    std::vector<torch::Tensor> out;
    for (auto& [_, p] : group_parameters(ParamGroup::spatial)) out.push_back(p);
    return out;
}

void T2VModelImpl::freeze_spatial() {
    for (auto& p : spatial_parameters()) p.set_requires_grad(false);
    spatial_frozen_ = true;
}

T2VModel build_model(ModelConfig config, std::uint64_t seed) {
    config.seed = seed;
    config.validate();
    torch::manual_seed(seed);
    return T2VModel(std::move(config));
}

std::string hash_group(const T2VModel& model, ParamGroup group) {
    std::vector<std::uint8_t> bytes;
    for (const auto& [name, p] : model->group_parameters(group)) {
        auto flat = p.detach().contiguous().cpu();
        const auto* data = static_cast<const std::uint8_t*>(flat.data_ptr());
        bytes.insert(bytes.end(), name.begin(), name.end());
        bytes.insert(bytes.end(), data, data + flat.nbytes());
    }
    return files::sha256_hex(bytes);
}

}  // namespace harivo
