#pragma once

#include "harivo/data/clips.hpp"
#include "harivo/data/vocab.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace harivo {

// Indexable clip source used by the trainer.
class ClipSource {
public:
    virtual ~ClipSource() = default;
    virtual std::size_t size() const = 0;
    virtual Clip get(std::size_t index) const = 0;
};

class InMemoryClips : public ClipSource {
public:
    explicit InMemoryClips(std::vector<Clip> clips);
    std::size_t size() const override { return clips_.size(); }
    Clip get(std::size_t index) const override { return clips_.at(index); }

private:
    std::vector<Clip> clips_;
};

struct ManifestRow {
    std::filesystem::path dir;
    std::string caption;
    std::vector<std::filesystem::path> frames;  // sorted frame files
    std::int64_t line = 0;                      // 1-based line in the CSV
};

// CSV "path,caption" whose paths are directories of zero-padded PNG frames,
// relative to the manifest. Rows are validated up front; pixels load lazily.
class ManifestDataset : public ClipSource {
public:
    ManifestDataset(std::vector<ManifestRow> rows, std::int64_t frames, std::int64_t height, std::int64_t width);

    std::size_t size() const override { return rows_.size(); }
    Clip get(std::size_t index) const override;
    const std::vector<ManifestRow>& rows() const { return rows_; }

private:
    std::vector<ManifestRow> rows_;
    std::int64_t frames_, height_, width_;
};

// Throws IngestionError naming the file and row for any defect.
ManifestDataset load_manifest(const std::filesystem::path& path, std::int64_t frames, std::int64_t height,
                              std::int64_t width, const Vocabulary& vocab = Vocabulary::builtin());

// RFC 4180-style field splitting (quotes, doubled quotes, commas inside quotes).
std::vector<std::string> split_csv_line(const std::string& line);

// Center crop to the target aspect ratio, then bilinear resize. (C, h, w) -> (C, H, W).
torch::Tensor fit_frame(const torch::Tensor& frame, std::int64_t height, std::int64_t width);

// Writes frame_0001.png ... and returns the directory.
void write_clip_frames(const std::filesystem::path& dir, const torch::Tensor& video);

}  // namespace harivo
