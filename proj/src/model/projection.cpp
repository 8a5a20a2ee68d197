#include "harivo/model/projection.hpp"

#include "harivo/errors.hpp"

namespace harivo::nn {

ProjectionHeadImpl::ProjectionHeadImpl(std::int64_t channels, std::int64_t height, std::int64_t width)
    : channels_(channels), height_(height), width_(width) {
    layers_ = register_module(
        "layers",
        torch::nn::Sequential(
            torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, {height, width}).bias(false)),
            torch::nn::SiLU(), torch::nn::Flatten(), torch::nn::Linear(channels, channels), torch::nn::SiLU(),
            torch::nn::Linear(channels, channels), torch::nn::SiLU(), torch::nn::Linear(channels, channels)));
}

torch::Tensor ProjectionHeadImpl::forward(const torch::Tensor& h) {
    if (h.dim() != 4 || h.size(1) != channels_ || h.size(2) != height_ || h.size(3) != width_) {
        throw ShapeError("projection head expects (N, " + std::to_string(channels_) + ", " +
                         std::to_string(height_) + ", " + std::to_string(width_) + ")");
    }
    return layers_->forward(h);
}

}  // namespace harivo::nn
