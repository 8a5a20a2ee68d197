#include "test_framework.hpp"

#include "harivo/data/clips.hpp"
#include "harivo/data/image_io.hpp"
#include "harivo/data/manifest.hpp"
#include "harivo/errors.hpp"
#include "support.hpp"

#include <torch/torch.h>

#include <fstream>
#include <map>
#include <string>
#include <vector>

using namespace harivo;
using harivo::testing::max_abs_diff;
using harivo::testing::scratch_dir;

namespace {

// Centroid (row, col) of non-background pixels in one frame.
std::pair<double, double> centroid(const torch::Tensor& frame, double background) {
    auto mask = (frame - background).abs().sum(0) > 1e-6;
    auto idx = mask.nonzero().to(torch::kDouble);
    return {idx.select(1, 0).mean().item<double>(), idx.select(1, 1).mean().item<double>()};
}

void write_text(const std::filesystem::path& p, const std::string& s) {
    std::ofstream(p) << s;
}

// Reference GIF decoder: returns palette-index frames. Only handles what the
// encoder emits (global palette, full-size frames, no local tables).
struct DecodedGif {
    int width = 0, height = 0;
    std::vector<std::array<int, 3>> palette;
    std::vector<std::vector<int>> frames;
};

DecodedGif decode_gif(const std::vector<std::uint8_t>& b) {
    DecodedGif g;
    std::size_t p = 6;
    auto u16 = [&]() {
        int v = b[p] | (b[p + 1] << 8);
        p += 2;
        return v;
    };
    g.width = u16();
    g.height = u16();
    const int flags = b[p];
    p += 3;
    const int entries = 1 << ((flags & 7) + 1);
    for (int i = 0; i < entries; ++i, p += 3) g.palette.push_back({b[p], b[p + 1], b[p + 2]});
    while (b[p] != 0x3B) {
        if (b[p] == 0x21) {
            p += 2;
            while (b[p] != 0) p += b[p] + 1;
            ++p;
            continue;
        }
        REQUIRE(b[p] == 0x2C);
        p += 10;
        const int min_code = b[p++];
        std::vector<std::uint8_t> data;
        while (b[p] != 0) {
            data.insert(data.end(), b.begin() + p + 1, b.begin() + p + 1 + b[p]);
            p += b[p] + 1;
        }
        ++p;
        const int clear = 1 << min_code, stop = clear + 1;
        std::vector<std::vector<int>> dict;
        auto reset = [&]() {
            dict.clear();
            for (int i = 0; i < clear + 2; ++i) dict.push_back({i});
        };
        reset();
        int width = min_code + 1;
        std::size_t bit = 0;
        auto read = [&]() {
            int v = 0;
            for (int k = 0; k < width; ++k, ++bit) v |= ((data[bit / 8] >> (bit % 8)) & 1) << k;
            return v;
        };
        std::vector<int> out;
        int prev = -1;
        for (;;) {
            const int code = read();
            if (code == clear) {
                reset();
                width = min_code + 1;
                prev = -1;
                continue;
            }
            if (code == stop) break;
            std::vector<int> entry;
            if (code < static_cast<int>(dict.size())) {
                entry = dict[code];
                if (prev >= 0 && dict.size() < 4096) {
                    auto e = dict[prev];
                    e.push_back(entry[0]);
                    dict.push_back(e);
                }
            } else {
                entry = dict[prev];
                entry.push_back(entry[0]);
                dict.push_back(entry);
            }
            out.insert(out.end(), entry.begin(), entry.end());
            prev = code;
            if (static_cast<int>(dict.size()) == (1 << width) && width < 12) ++width;
        }
        g.frames.push_back(out);
    }
    return g;
}

}  // namespace

TEST_CASE("generate_clip motion is exact") {
    ClipSpec spec;
    spec.motion = Motion::right;
    spec.speed = 2;
    spec.origin = std::array<std::int64_t, 2>{4, 2};
    auto clip = generate_clip(spec, 6, 24, 32);
    CHECK(clip.video.sizes() == std::vector<std::int64_t>{6, 3, 24, 32});
    CHECK(clip.caption == "red square moving right");
    for (int j = 1; j < 6; ++j) {
        auto [r0, c0] = centroid(clip.video[j - 1], 0.0);
        auto [r1, c1] = centroid(clip.video[j], 0.0);
        CHECK(c1 - c0 == doctest::Approx(2.0));
        CHECK(r1 == doctest::Approx(r0));
    }

    spec.motion = Motion::up;
    spec.speed = 1;
    spec.origin = std::array<std::int64_t, 2>{10, 10};
    spec.shape = ShapeKind::triangle;
    auto up = generate_clip(spec, 5, 24, 32);
    for (int j = 1; j < 5; ++j) {
        CHECK(centroid(up.video[j], 0.0).first - centroid(up.video[j - 1], 0.0).first == doctest::Approx(-1.0));
    }

    spec.motion = Motion::grow;
    spec.shape = ShapeKind::circle;
    auto grow = generate_clip(spec, 4, 24, 32);
    auto count = [](const torch::Tensor& f) { return ((f - 0.0).abs().sum(0) > 1e-6).sum().item<std::int64_t>(); };
    for (int j = 1; j < 4; ++j) {
        CHECK(count(grow.video[j]) > count(grow.video[j - 1]));
        CHECK(centroid(grow.video[j], 0.0).second == doctest::Approx(centroid(grow.video[0], 0.0).second));
    }
}

TEST_CASE("generate_clip still, determinism and errors") {
    ClipSpec spec;
    spec.motion = Motion::still;
    spec.color = Color::yellow;
    spec.background = -0.2;
    spec.seed = 17;
    auto clip = generate_clip(spec, 5, 16, 16);
    for (int j = 1; j < 5; ++j) CHECK(torch::equal(clip.video[j], clip.video[0]));
    CHECK(torch::equal(generate_clip(spec, 5, 16, 16).video, clip.video));
    CHECK(clip.video.min().item<float>() >= -1.0f);
    CHECK(clip.caption == "yellow square moving still");

    spec.motion = Motion::left;
    spec.origin = std::array<std::int64_t, 2>{0, 2};
    CHECK_THROWS_AS(generate_clip(spec, 5, 16, 16), ClipSpecError);
    spec.origin.reset();
    spec.size = 14;
    CHECK_THROWS_AS(generate_clip(spec, 5, 16, 16), ClipSpecError);
    spec.size = 4;
    spec.motion = Motion::shrink;
    CHECK_THROWS_AS(generate_clip(spec, 5, 16, 16), ClipSpecError);
}

TEST_CASE("synthetic clip sets") {
    auto clips = synthetic_clips(4, 8, 16, 16, 3);
    REQUIRE(clips.size() == 4);
    std::map<std::string, int> seen;
    for (std::size_t i = 0; i < clips.size(); ++i) {
        CHECK(clips[i].video_id == static_cast<std::int64_t>(i));
        CHECK(clips[i].video.sizes() == std::vector<std::int64_t>{8, 3, 16, 16});
        ++seen[clips[i].caption];
    }
    CHECK(seen.size() == 4);
    CHECK(torch::equal(synthetic_clips(4, 8, 16, 16, 3)[2].video, clips[2].video));
    CHECK(caption_grid().size() == 84);
    // every grid entry is renderable at the default scale
    for (auto spec : caption_grid()) {
        spec.size = 8;
        if (spec.motion == Motion::shrink) spec.size = 16;
        CHECK_NOTHROW(generate_clip(spec, 8, 32, 32));
    }
}

TEST_CASE("tokenize_caption") {
    auto cfg = harivo::testing::tiny_config();
    auto model = build_model(cfg, 1);
    torch::NoGradGuard no_grad;
    const auto& vocab = Vocabulary::builtin();
    auto empty = tokenize_caption(model, vocab, "");
    CHECK(empty.sizes() == std::vector<std::int64_t>{1, cfg.max_tokens, cfg.token_dim});
    auto eos = model->encode_text(torch::zeros({1, cfg.max_tokens}, torch::kInt64))[0][0];
    for (std::int64_t i = 0; i < cfg.max_tokens; ++i) CHECK(torch::equal(empty[0][i], eos));

    auto t = tokenize_caption(model, vocab, "red square moving right");
    const char* words[] = {"red", "square", "moving", "right"};
    for (int i = 0; i < 4; ++i) {
        auto w = model->encode_text(torch::full({1, cfg.max_tokens}, vocab.id(words[i]), torch::kInt64))[0][0];
        CHECK(torch::equal(t[0][i], w));
    }
    CHECK(torch::equal(t[0][4], eos));
    CHECK_FALSE(torch::equal(t, tokenize_caption(model, vocab, "blue square moving right")));
    CHECK_THROWS_AS(tokenize_caption(model, vocab, "red hexagon"), VocabularyError);
    CHECK_THROWS_AS(tokenize_caption(model, vocab, "red red red red red red red"), VocabularyError);
}

TEST_CASE("png round trip") {
    auto dir = scratch_dir("png");
    auto frame = torch::rand({3, 5, 7}) * 2.0 - 1.0;
    image::write_png(dir / "a.png", frame);
    auto back = image::read_png(dir / "a.png");
    CHECK(back.sizes() == frame.sizes());
    CHECK(max_abs_diff(back, frame) <= 1.0 / 127.5);

    auto gray = torch::rand({1, 4, 4}) * 2.0 - 1.0;
    image::write_png(dir / "g.png", gray);
    auto g = image::read_png(dir / "g.png");
    CHECK(g.size(0) == 3);
    CHECK(max_abs_diff(g[1], gray[0]) <= 1.0 / 127.5);

    CHECK(image::to_byte(-1.0f) == 0);
    CHECK(image::to_byte(1.0f) == 255);
    CHECK(image::from_byte(255) == doctest::Approx(1.0f));

    write_text(dir / "bad.png", "not a png");
    CHECK_THROWS_AS(image::read_png(dir / "bad.png"), IngestionError);
    CHECK_THROWS_AS(image::read_png(dir / "missing.png"), IngestionError);
}

TEST_CASE("gif encoding decodes to the palette-quantized frames") {
    ClipSpec spec;
    spec.color = Color::blue;
    spec.background = 0.0;
    auto clip = generate_clip(spec, 3, 40, 40);
    // noise frame exercises long code streams and dictionary resets
    auto video = torch::cat({clip.video, torch::rand({2, 3, 40, 40}) * 2.0 - 1.0});
    auto bytes = image::encode_gif(video, 10);
    CHECK(std::string(bytes.begin(), bytes.begin() + 6) == "GIF89a");
    CHECK(bytes.back() == 0x3B);
    auto g = decode_gif(bytes);
    CHECK(g.width == 40);
    CHECK(g.height == 40);
    REQUIRE(g.frames.size() == 5);
    for (const auto& f : g.frames) CHECK(f.size() == 1600u);
    // pure blue object pixel and mid-gray background land on near-exact palette entries
    const auto& blue = g.palette[static_cast<std::size_t>(g.frames[0][static_cast<std::size_t>(
        clip.video[0][2].flatten().argmax().item<std::int64_t>())])];
    CHECK(blue == std::array<int, 3>{0, 0, 255});
    // nearest palette color is no farther than the nearest cube corner (half a step per channel)
    auto bytes_frame = video[3].permute({1, 2, 0}).contiguous();
    const float* px = bytes_frame.data_ptr<float>();
    int worst = 0;
    for (int i = 0; i < 1600; ++i) {
        const auto& c = g.palette[static_cast<std::size_t>(g.frames[3][static_cast<std::size_t>(i)])];
        int d2 = 0;
        for (int ch = 0; ch < 3; ++ch) {
            const int d = c[ch] - image::to_byte(px[i * 3 + ch]);
            d2 += d * d;
        }
        worst = std::max(worst, d2);
    }
    CHECK(worst <= 3 * 26 * 26);
}

TEST_CASE("csv splitting") {
    CHECK(split_csv_line("a,b") == std::vector<std::string>{"a", "b"});
    CHECK(split_csv_line("\"x, y\",\"say \"\"hi\"\"\"") == std::vector<std::string>{"x, y", "say \"hi\""});
    CHECK(split_csv_line("a,,") == std::vector<std::string>{"a", "", ""});
    CHECK_THROWS_AS(split_csv_line("\"open"), IngestionError);
}

TEST_CASE("manifest ingestion") {
    auto dir = scratch_dir("manifest");
    ClipSpec s1;
    s1.motion = Motion::down;
    s1.size = 4;
    auto c1 = generate_clip(s1, 8, 16, 16);
    ClipSpec s2;
    s2.shape = ShapeKind::circle;
    s2.color = Color::green;
    s2.motion = Motion::still;
    auto c2 = generate_clip(s2, 9, 16, 16);
    write_clip_frames(dir / "clip1", c1.video);
    write_clip_frames(dir / "clip2", c2.video);
    write_text(dir / "ok.csv", "path,caption\nclip1,\"" + c1.caption + "\"\r\nclip2," + c2.caption + "\n");

    auto ds = load_manifest(dir / "ok.csv", 8, 16, 16);
    REQUIRE(ds.size() == 2);
    auto back = ds.get(0);
    CHECK(back.caption == c1.caption);
    CHECK(max_abs_diff(back.video, c1.video) <= 1.0 / 127.5);
    CHECK(ds.get(1).video.size(0) == 8);  // first F frames

    auto small = load_manifest(dir / "ok.csv", 8, 8, 8);
    CHECK(small.get(1).video.sizes() == std::vector<std::int64_t>{8, 3, 8, 8});

    write_clip_frames(dir / "short", c1.video.narrow(0, 0, 3));
    write_text(dir / "short.csv", "path,caption\nclip1,red square moving down\nshort,red square moving down\n");
    try {
        load_manifest(dir / "short.csv", 8, 16, 16);
        FAIL("expected an ingestion error");
    } catch (const IngestionError& e) {
        CHECK(std::string(e.what()).find("row 3") != std::string::npos);
        CHECK(std::string(e.what()).find("3 frames") != std::string::npos);
    }

    write_text(dir / "header.csv", "file,text\nclip1,red\n");
    CHECK_THROWS_AS(load_manifest(dir / "header.csv", 8, 16, 16), IngestionError);
    write_text(dir / "missing.csv", "path,caption\nnowhere,red\n");
    CHECK_THROWS_AS(load_manifest(dir / "missing.csv", 8, 16, 16), IngestionError);
    write_text(dir / "vocab.csv", "path,caption\nclip1,purple square\n");
    CHECK_THROWS_AS(load_manifest(dir / "vocab.csv", 8, 16, 16), IngestionError);
    CHECK_THROWS_AS(load_manifest(dir / "absent.csv", 8, 16, 16), IngestionError);
}

TEST_CASE("fit_frame crops then resizes") {
    auto wide = torch::zeros({3, 8, 16});
    wide.narrow(2, 4, 8).fill_(1.0);  // center 8 columns
    auto out = fit_frame(wide, 4, 4);
    CHECK(out.sizes() == std::vector<std::int64_t>{3, 4, 4});
    CHECK(out.min().item<float>() == doctest::Approx(1.0f));
    auto same = torch::rand({3, 4, 4});
    CHECK(torch::equal(fit_frame(same, 4, 4), same));
}
