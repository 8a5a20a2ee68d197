#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace harivo::files {

// Writes to a sibling temp file and renames it over `path`, so readers never
// observe a truncated file.
void write_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_atomic(const std::filesystem::path& path, std::string_view text);

std::string read_text(const std::filesystem::path& path);

// Lower-case hex SHA-256 digest.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(const std::filesystem::path& path);

// Appends lines to a file; used for JSON-lines logs.
class LineWriter {
public:
    explicit LineWriter(const std::filesystem::path& path, bool truncate = true);
    ~LineWriter();
    LineWriter(const LineWriter&) = delete;
    LineWriter& operator=(const LineWriter&) = delete;

    void write_line(std::string_view line);

private:
    std::FILE* fp_ = nullptr;
};

}  // namespace harivo::files
