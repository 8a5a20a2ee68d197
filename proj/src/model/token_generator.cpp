#include "harivo/model/token_generator.hpp"

namespace harivo::nn {

TokenGeneratorImpl::TokenGeneratorImpl(std::int64_t token_dim, std::int64_t max_tokens, std::int64_t frame_tokens,
                                       std::int64_t frames)
    : frame_tokens_(frame_tokens), frames_(frames) {
    if (frame_tokens_ == 0) return;
    // linear+SiLU, SiLU, conv1d, SiLU, 4 x (linear+SiLU)
    torch::nn::Sequential seq;
    seq->push_back(torch::nn::Linear(token_dim, token_dim));
    seq->push_back(torch::nn::SiLU());
    seq->push_back(torch::nn::SiLU());
    seq->push_back(torch::nn::Conv1d(torch::nn::Conv1dOptions(max_tokens, frame_tokens * frames, 1).bias(false)));
    seq->push_back(torch::nn::SiLU());
    for (int i = 0; i < 4; ++i) {
        seq->push_back(torch::nn::Linear(token_dim, token_dim));
        seq->push_back(torch::nn::SiLU());
    }
    layers_ = register_module("layers", seq);
}

torch::Tensor TokenGeneratorImpl::forward(const torch::Tensor& text_tokens) {
    const auto b = text_tokens.size(0), d = text_tokens.size(2);
    if (frame_tokens_ == 0) return text_tokens.new_zeros({b, frames_, 0, d});
    // "b (f n) c -> b f n c"
    return layers_->forward(text_tokens).reshape({b, frames_, frame_tokens_, d});
}

}  // namespace harivo::nn
