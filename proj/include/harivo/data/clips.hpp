#pragma once

#include "harivo/data/vocab.hpp"
#include "harivo/model/t2v_model.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace harivo {

enum class ShapeKind { square, circle, triangle };
enum class Color { red, green, blue, yellow };
enum class Motion { left, right, up, down, grow, shrink, still };

const char* to_string(ShapeKind s);
const char* to_string(Color c);
const char* to_string(Motion m);

struct ClipSpec {
    ShapeKind shape = ShapeKind::square;
    Color color = Color::red;
    Motion motion = Motion::right;
    std::int64_t speed = 1;         // pixels per frame; for grow/shrink, per side
    std::int64_t size = 8;          // bounding-box side at frame 0
    double background = 0.0;        // gray level in [-1, 1]
    // Top-left corner at frame 0. When unset, drawn from `seed` among the
    // positions that keep the object inside the frame for every frame.
    std::optional<std::array<std::int64_t, 2>> origin;  // (row, col)
    std::uint64_t seed = 0;
};

struct Clip {
    torch::Tensor video;  // (F, 3, H, W) in [-1, 1]
    std::string caption;
    std::int64_t video_id = 0;
};

// Deterministic in the spec; throws ClipSpecError if the object cannot stay in frame.
Clip generate_clip(const ClipSpec& spec, std::int64_t frames, std::int64_t height, std::int64_t width);

// "<color> <shape> moving <motion>"
std::string caption_for(const ClipSpec& spec);

// The caption grid: every (shape, color, motion) combination.
std::vector<ClipSpec> caption_grid();

// n clips with varied specs drawn from `seed`; video ids 0 .. n-1.
std::vector<Clip> synthetic_clips(std::int64_t n, std::int64_t frames, std::int64_t height, std::int64_t width,
                                  std::uint64_t seed);

// Embedded caption (1, M, D) through the model's text table; "" is the unconditional stream.
torch::Tensor tokenize_caption(T2VModel& model, const Vocabulary& vocab, const std::string& caption);

// (B, M) ids for a list of captions.
torch::Tensor caption_ids(const Vocabulary& vocab, const std::vector<std::string>& captions, std::int64_t max_tokens);

}  // namespace harivo
