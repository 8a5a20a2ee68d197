#include "harivo/util/files.hpp"

#include "harivo/errors.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <random>
#include <sstream>
#include <vector>

namespace harivo::files {

namespace fs = std::filesystem;

void write_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    static thread_local std::mt19937_64 salt{std::random_device{}()};
    fs::path tmp = path;
    tmp += ".tmp" + std::to_string(salt() & 0xffffff);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open " + tmp.string() + " for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw Error("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

void write_atomic(const fs::path& path, std::string_view text) {
    write_atomic(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256 failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::string sha256_hex(const fs::path& path) {
    std::string text = read_text(path);
    return sha256_hex(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

LineWriter::LineWriter(const fs::path& path, bool truncate) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fp_ = std::fopen(path.c_str(), truncate ? "w" : "a");
    if (fp_ == nullptr) throw Error("cannot open " + path.string());
}

LineWriter::~LineWriter() {
    if (fp_ != nullptr) std::fclose(fp_);
}

void LineWriter::write_line(std::string_view line) {
    std::fwrite(line.data(), 1, line.size(), fp_);
    std::fputc('\n', fp_);
    std::fflush(fp_);
}

}  // namespace harivo::files
