#pragma once

#include <torch/torch.h>

#include <cstdint>

namespace harivo::nn {

// (B, M, D) text tokens -> (B, F, K, D) frame-wise tokens.
// linear+SiLU, SiLU, 1x1 conv over the token axis (M -> F*K), SiLU, 4 x linear+SiLU.
class TokenGeneratorImpl : public torch::nn::Module {
public:
    TokenGeneratorImpl(std::int64_t token_dim, std::int64_t max_tokens, std::int64_t frame_tokens,
                       std::int64_t frames);
    torch::Tensor forward(const torch::Tensor& text_tokens);

    std::int64_t frame_tokens() const { return frame_tokens_; }

private:
    std::int64_t frame_tokens_, frames_;
    torch::nn::Sequential layers_{nullptr};
};
TORCH_MODULE(TokenGenerator);

}  // namespace harivo::nn
