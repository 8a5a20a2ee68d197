#pragma once

#include <torch/torch.h>

#include <cstdint>

namespace harivo::nn {

// h-space projection head for the contrastive loss:
// full-extent conv (c, h, w) -> c, then linear-SiLU-linear-SiLU-linear.
class ProjectionHeadImpl : public torch::nn::Module {
public:
    ProjectionHeadImpl(std::int64_t channels, std::int64_t height, std::int64_t width);
    // (N, c, h, w) -> (N, c)
    torch::Tensor forward(const torch::Tensor& h);

private:
    std::int64_t channels_, height_, width_;
    torch::nn::Sequential layers_{nullptr};
};
TORCH_MODULE(ProjectionHead);

}  // namespace harivo::nn
