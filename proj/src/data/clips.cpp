#include "harivo/data/clips.hpp"

#include "harivo/errors.hpp"

#include <random>

namespace harivo {

const char* to_string(ShapeKind s) {
    switch (s) {
        case ShapeKind::square: return "square";
        case ShapeKind::circle: return "circle";
        case ShapeKind::triangle: return "triangle";
    }
    return "?";
}

const char* to_string(Color c) {
    switch (c) {
        case Color::red: return "red";
        case Color::green: return "green";
        case Color::blue: return "blue";
        case Color::yellow: return "yellow";
    }
    return "?";
}

const char* to_string(Motion m) {
    switch (m) {
        case Motion::left: return "left";
        case Motion::right: return "right";
        case Motion::up: return "up";
        case Motion::down: return "down";
        case Motion::grow: return "grow";
        case Motion::shrink: return "shrink";
        case Motion::still: return "still";
    }
    return "?";
}

std::string caption_for(const ClipSpec& spec) {
    return std::string(to_string(spec.color)) + " " + to_string(spec.shape) + " moving " + to_string(spec.motion);
}

namespace {

std::array<float, 3> rgb(Color c) {
    switch (c) {
        case Color::red: return {1.f, -1.f, -1.f};
        case Color::green: return {-1.f, 1.f, -1.f};
        case Color::blue: return {-1.f, -1.f, 1.f};
        case Color::yellow: return {1.f, 1.f, -1.f};
    }
    return {0.f, 0.f, 0.f};
}

// Object footprint inside its s x s box.
bool covers(ShapeKind shape, std::int64_t s, std::int64_t r, std::int64_t c) {
    const double cy = r + 0.5 - s / 2.0, cx = c + 0.5 - s / 2.0;
    switch (shape) {
        case ShapeKind::square: return true;
        case ShapeKind::circle: return cy * cy + cx * cx <= (s / 2.0) * (s / 2.0);
        case ShapeKind::triangle: return std::abs(cx) <= (r + 1) / 2.0;  // apex at the top row
    }
    return false;
}

struct Placement {
    std::int64_t row, col, size;
};

// Box of frame j given the frame-0 origin.
Placement place(const ClipSpec& spec, std::int64_t row0, std::int64_t col0, std::int64_t j) {
    const auto d = spec.speed * j;
    switch (spec.motion) {
        case Motion::left: return {row0, col0 - d, spec.size};
        case Motion::right: return {row0, col0 + d, spec.size};
        case Motion::up: return {row0 - d, col0, spec.size};
        case Motion::down: return {row0 + d, col0, spec.size};
        // the box grows on every side so its center stays put
        case Motion::grow: return {row0 - d, col0 - d, spec.size + 2 * d};
        case Motion::shrink: return {row0 + d, col0 + d, spec.size - 2 * d};
        case Motion::still: return {row0, col0, spec.size};
    }
    return {row0, col0, spec.size};
}

bool fits(const ClipSpec& spec, std::int64_t row0, std::int64_t col0, std::int64_t frames, std::int64_t h,
          std::int64_t w) {
    for (std::int64_t j = 0; j < frames; ++j) {
        auto p = place(spec, row0, col0, j);
        if (p.size < 2 || p.row < 0 || p.col < 0 || p.row + p.size > h || p.col + p.size > w) return false;
    }
    return true;
}

}  // namespace

Clip generate_clip(const ClipSpec& spec, std::int64_t frames, std::int64_t height, std::int64_t width) {
    if (frames < 1 || height < 1 || width < 1) throw ClipSpecError("clip dimensions must be positive");
    if (spec.speed < 0) throw ClipSpecError("speed must be >= 0");
    if (spec.size < 2) throw ClipSpecError("object size must be >= 2");
    if (!(spec.background >= -1.0 && spec.background <= 1.0)) throw ClipSpecError("background must lie in [-1, 1]");

    std::int64_t row0 = 0, col0 = 0;
    if (spec.origin) {
        row0 = (*spec.origin)[0];
        col0 = (*spec.origin)[1];
        if (!fits(spec, row0, col0, frames, height, width)) {
            throw ClipSpecError("'" + caption_for(spec) + "' leaves the frame from the given origin");
        }
    } else {
        std::vector<std::array<std::int64_t, 2>> valid;
        for (std::int64_t r = 0; r < height; ++r)
            for (std::int64_t c = 0; c < width; ++c)
                if (fits(spec, r, c, frames, height, width)) valid.push_back({r, c});
        if (valid.empty()) {
            throw ClipSpecError("'" + caption_for(spec) + "' cannot stay inside a " + std::to_string(height) + "x" +
                                std::to_string(width) + " frame for " + std::to_string(frames) + " frames");
        }
        std::mt19937_64 rng(spec.seed);
        const auto& pick = valid[std::uniform_int_distribution<std::size_t>(0, valid.size() - 1)(rng)];
        row0 = pick[0];
        col0 = pick[1];
    }

    auto video = torch::full({frames, 3, height, width}, static_cast<float>(spec.background));
    auto acc = video.accessor<float, 4>();
    const auto color = rgb(spec.color);
    for (std::int64_t j = 0; j < frames; ++j) {
        auto p = place(spec, row0, col0, j);
        for (std::int64_t r = 0; r < p.size; ++r)
            for (std::int64_t c = 0; c < p.size; ++c)
                if (covers(spec.shape, p.size, r, c))
                    for (int ch = 0; ch < 3; ++ch) acc[j][ch][p.row + r][p.col + c] = color[ch];
    }
    return {video, caption_for(spec), 0};
}

std::vector<ClipSpec> caption_grid() {
    std::vector<ClipSpec> out;
    for (auto shape : {ShapeKind::square, ShapeKind::circle, ShapeKind::triangle})
        for (auto color : {Color::red, Color::green, Color::blue, Color::yellow})
            for (auto motion : {Motion::left, Motion::right, Motion::up, Motion::down, Motion::grow, Motion::shrink,
                                Motion::still}) {
                ClipSpec s;
                s.shape = shape;
                s.color = color;
                s.motion = motion;
                out.push_back(s);
            }
    return out;
}

std::vector<Clip> synthetic_clips(std::int64_t n, std::int64_t frames, std::int64_t height, std::int64_t width,
                                  std::uint64_t seed) {
    if (n < 1) throw ClipSpecError("need at least one clip");
    std::mt19937_64 rng(seed);
    auto grid = caption_grid();
    std::shuffle(grid.begin(), grid.end(), rng);
    std::vector<Clip> clips;
    const std::int64_t side = std::min(height, width);
    for (std::int64_t i = 0; i < n; ++i) {
        auto spec = grid[static_cast<std::size_t>(i) % grid.size()];
        spec.size = std::max<std::int64_t>(4, side / 4);
        spec.speed = 1;
        // keep grow/shrink feasible over the clip length
        if (spec.motion == Motion::shrink) spec.size = std::min(side, std::max(spec.size, 2 * frames));
        if (spec.motion == Motion::grow) spec.size = std::max<std::int64_t>(2, std::min(spec.size, side - 2 * (frames - 1)));
        spec.seed = rng();
        auto clip = generate_clip(spec, frames, height, width);
        clip.video_id = i;
        clips.push_back(std::move(clip));
    }
    return clips;
}

torch::Tensor caption_ids(const Vocabulary& vocab, const std::vector<std::string>& captions,
                          std::int64_t max_tokens) {
    std::vector<std::int64_t> flat;
    for (const auto& c : captions) {
        auto ids = vocab.encode(c, max_tokens);
        flat.insert(flat.end(), ids.begin(), ids.end());
    }
    return torch::tensor(flat, torch::kInt64).view({static_cast<std::int64_t>(captions.size()), max_tokens});
}

torch::Tensor tokenize_caption(T2VModel& model, const Vocabulary& vocab, const std::string& caption) {
    return model->encode_text(caption_ids(vocab, {caption}, model->config().max_tokens));
}

}  // namespace harivo
