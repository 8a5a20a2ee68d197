#include "harivo/data/manifest.hpp"

#include "harivo/data/image_io.hpp"
#include "harivo/errors.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace harivo {

namespace fs = std::filesystem;

InMemoryClips::InMemoryClips(std::vector<Clip> clips) : clips_(std::move(clips)) {}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (quoted) throw IngestionError("unterminated quoted field");
    fields.push_back(cur);
    return fields;
}

torch::Tensor fit_frame(const torch::Tensor& frame, std::int64_t height, std::int64_t width) {
    auto x = frame;
    const auto h = x.size(1), w = x.size(2);
    if (h == height && w == width) return x;
    // crop the longer side so the aspect ratio matches
    if (h * width > w * height) {
        const auto ch = w * height / width;
        x = x.narrow(1, (h - ch) / 2, ch);
    } else if (h * width < w * height) {
        const auto cw = h * width / height;
        x = x.narrow(2, (w - cw) / 2, cw);
    }
    namespace F = torch::nn::functional;
    x = F::interpolate(x.unsqueeze(0), F::InterpolateFuncOptions()
                                           .size(std::vector<std::int64_t>{height, width})
                                           .mode(torch::kBilinear)
                                           .align_corners(false)
                                           .antialias(true));
    return x.squeeze(0).clamp(-1.0, 1.0);
}

ManifestDataset::ManifestDataset(std::vector<ManifestRow> rows, std::int64_t frames, std::int64_t height,
                                 std::int64_t width)
    : rows_(std::move(rows)), frames_(frames), height_(height), width_(width) {}

Clip ManifestDataset::get(std::size_t index) const {
    const auto& row = rows_.at(index);
    std::vector<torch::Tensor> frames;
    for (std::int64_t j = 0; j < frames_; ++j) {
        try {
            frames.push_back(fit_frame(image::read_png(row.frames[static_cast<std::size_t>(j)]), height_, width_));
        } catch (const IngestionError& e) {
            throw IngestionError("manifest row " + std::to_string(row.line) + ": " + e.what());
        }
    }
    return {torch::stack(frames), row.caption, static_cast<std::int64_t>(index)};
}

ManifestDataset load_manifest(const fs::path& path, std::int64_t frames, std::int64_t height, std::int64_t width,
                              const Vocabulary& vocab) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open manifest " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw IngestionError(path.string() + ": empty manifest");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (split_csv_line(line) != std::vector<std::string>{"path", "caption"}) {
        throw IngestionError(path.string() + ": header must be 'path,caption'");
    }
    const auto base = path.parent_path();
    std::vector<ManifestRow> rows;
    std::int64_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto where = path.string() + " row " + std::to_string(lineno) + ": ";
        std::vector<std::string> fields;
        try {
            fields = split_csv_line(line);
        } catch (const IngestionError& e) {
            throw IngestionError(where + e.what());
        }
        if (fields.size() != 2) throw IngestionError(where + "expected 2 fields, got " + std::to_string(fields.size()));
        ManifestRow row;
        row.dir = fs::path(fields[0]).is_absolute() ? fs::path(fields[0]) : base / fields[0];
        row.caption = fields[1];
        row.line = lineno;
        if (!fs::is_directory(row.dir)) throw IngestionError(where + "missing frame directory " + row.dir.string());
        for (const auto& entry : fs::directory_iterator(row.dir)) {
            if (entry.is_regular_file() && entry.path().extension() == ".png") row.frames.push_back(entry.path());
        }
        std::sort(row.frames.begin(), row.frames.end());
        if (static_cast<std::int64_t>(row.frames.size()) < frames) {
            throw IngestionError(where + "clip has " + std::to_string(row.frames.size()) + " frames, need " +
                                 std::to_string(frames));
        }
        try {
            std::istringstream words(row.caption);
            for (std::string w; words >> w;) vocab.id(w);
        } catch (const VocabularyError& e) {
            throw IngestionError(where + e.what());
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw IngestionError(path.string() + ": no rows");
    return ManifestDataset(std::move(rows), frames, height, width);
}

void write_clip_frames(const fs::path& dir, const torch::Tensor& video) {
    fs::create_directories(dir);
    for (std::int64_t j = 0; j < video.size(0); ++j) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%04lld.png", static_cast<long long>(j + 1));
        image::write_png(dir / name, video[j]);
    }
}

}  // namespace harivo
