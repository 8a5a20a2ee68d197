#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace harivo::image {

// Pixel convention: float tensors in [-1, 1] map to bytes by round((x + 1) * 127.5).
std::uint8_t to_byte(float v);
float from_byte(std::uint8_t b);

// frame: (C, H, W) with C in {1, 3}; written as 8-bit gray or RGB.
void write_png(const std::filesystem::path& path, const torch::Tensor& frame);

// Always returns (3, H, W) float in [-1, 1]; gray, palette and alpha inputs are converted.
torch::Tensor read_png(const std::filesystem::path& path);

// Encodes an 8-bit RGB image (H, W, 3 bytes) to PNG in memory.
std::vector<std::uint8_t> encode_png(const std::uint8_t* rgb, std::int64_t height, std::int64_t width,
                                     int channels);

// video: (F, C, H, W) in [-1, 1]; looping animated GIF with a fixed 256-color palette.
void write_gif(const std::filesystem::path& path, const torch::Tensor& video, int delay_centiseconds = 12);
std::vector<std::uint8_t> encode_gif(const torch::Tensor& video, int delay_centiseconds = 12);

}  // namespace harivo::image
