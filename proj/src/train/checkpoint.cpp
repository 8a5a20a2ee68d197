#include "harivo/train/checkpoint.hpp"

#include "harivo/errors.hpp"
#include "harivo/util/files.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace harivo {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "checkpoint codec assumes a little-endian host");

namespace {

class Writer {
public:
    template <typename T>
    void put(T v) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
        bytes.insert(bytes.end(), p, p + sizeof(T));
    }
    void raw(const void* data, std::size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        bytes.insert(bytes.end(), p, p + n);
    }
    std::vector<std::uint8_t> bytes;
};

class Reader {
public:
    Reader(const std::vector<std::uint8_t>& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

    template <typename T>
    T get() {
        T v;
        raw(&v, sizeof(T));
        return v;
    }
    void raw(void* out, std::size_t n) {
        if (n > bytes_.size() - pos_) throw IntegrityError(what_ + ": truncated");
        std::memcpy(out, bytes_.data() + pos_, n);
        pos_ += n;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::string what_;
    std::size_t pos_ = 0;
};

std::uint8_t dtype_tag(torch::ScalarType t) {
    switch (t) {
        case torch::kFloat: return 0;
        case torch::kDouble: return 1;
        case torch::kLong: return 2;
        default: throw Error("checkpoint: unsupported tensor dtype");
    }
}

torch::ScalarType dtype_of(std::uint8_t tag, const std::string& what) {
    switch (tag) {
        case 0: return torch::kFloat;
        case 1: return torch::kDouble;
        case 2: return torch::kLong;
        default: throw IntegrityError(what + ": unknown dtype tag " + std::to_string(tag));
    }
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IntegrityError("missing checkpoint file " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::uint8_t> encode_queue(const NegativeQueue& queue) {
    Writer w;
    w.raw("HRVQ", 4);
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put<std::uint64_t>(queue.capacity());
    w.put<std::uint64_t>(queue.size());
    const std::uint64_t dim = queue.empty() ? 0 : static_cast<std::uint64_t>(queue.entries().front().z.size(0));
    w.put<std::uint64_t>(dim);
    for (const auto& e : queue.entries()) {
        w.put<std::int64_t>(e.video_id);
        auto z = e.z.to(torch::kFloat).contiguous();
        w.raw(z.data_ptr<float>(), dim * sizeof(float));
    }
    return w.bytes;
}

NegativeQueue decode_queue(const std::vector<std::uint8_t>& bytes, const std::string& what) {
    Reader r(bytes, what);
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, "HRVQ", 4) != 0) throw IntegrityError(what + ": bad magic");
    if (r.get<std::uint32_t>() != kCheckpointVersion) throw IntegrityError(what + ": unsupported version");
    const auto capacity = r.get<std::uint64_t>();
    const auto count = r.get<std::uint64_t>();
    const auto dim = r.get<std::uint64_t>();
    if (capacity == 0 || count > capacity) throw IntegrityError(what + ": inconsistent sizes");
    NegativeQueue q(capacity);
    for (std::uint64_t i = 0; i < count; ++i) {
        std::vector<std::int64_t> id{r.get<std::int64_t>()};
        auto z = torch::empty({1, static_cast<std::int64_t>(dim)});
        r.raw(z.data_ptr<float>(), dim * sizeof(float));
        // stored vectors are already unit norm; push renormalizes, which is a
        // no-op up to rounding, so copy them in directly instead
        q.push_raw(z[0], id[0]);
    }
    if (!r.done()) throw IntegrityError(what + ": trailing bytes");
    return q;
}

}  // namespace

std::vector<std::uint8_t> encode_tensors(const NamedTensors& tensors) {
    Writer w;
    w.raw("HRVT", 4);
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        auto flat = t.detach().contiguous().cpu();
        w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
        w.raw(name.data(), name.size());
        w.put<std::uint8_t>(dtype_tag(flat.scalar_type()));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(flat.dim()));
        for (auto d : flat.sizes()) w.put<std::int64_t>(d);
        w.raw(flat.data_ptr(), flat.nbytes());
    }
    return w.bytes;
}

NamedTensors decode_tensors(const std::vector<std::uint8_t>& bytes, const std::string& what) {
    Reader r(bytes, what);
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, "HRVT", 4) != 0) throw IntegrityError(what + ": bad magic");
    if (r.get<std::uint32_t>() != kCheckpointVersion) throw IntegrityError(what + ": unsupported version");
    const auto count = r.get<std::uint32_t>();
    NamedTensors out;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name(r.get<std::uint32_t>(), '\0');
        r.raw(name.data(), name.size());
        const auto dtype = dtype_of(r.get<std::uint8_t>(), what);
        const auto rank = r.get<std::uint32_t>();
        if (rank > 8) throw IntegrityError(what + ": implausible rank");
        std::vector<std::int64_t> dims(rank);
        for (auto& d : dims) {
            d = r.get<std::int64_t>();
            if (d < 0) throw IntegrityError(what + ": negative dimension");
        }
        auto t = torch::empty(dims, torch::TensorOptions().dtype(dtype));
        r.raw(t.data_ptr(), t.nbytes());
        out.emplace_back(std::move(name), std::move(t));
    }
    if (!r.done()) throw IntegrityError(what + ": trailing bytes");
    return out;
}

void save_checkpoint(const fs::path& dir, const T2VModel& model, const NegativeQueue& queue,
                     const CheckpointInfo& info, torch::optim::Optimizer* optimizer) {
    fs::create_directories(dir);
    nlohmann::json meta;
    meta["schema_version"] = kCheckpointVersion;
    meta["config"] = to_json(model->config());
    meta["seed"] = model->config().seed;
    meta["step"] = info.step;
    meta["phase"] = info.phase;
    meta["spatial_frozen"] = model->spatial_frozen();
    meta["extra"] = info.extra;
    nlohmann::json groups = nlohmann::json::array();
    nlohmann::json hashes = nlohmann::json::object();
    for (auto g : kParamGroups) {
        const std::string file = std::string(to_string(g)) + ".bin";
        auto bytes = encode_tensors(model->group_parameters(g));
        files::write_atomic(dir / file, bytes);
        groups.push_back(to_string(g));
        hashes[file] = files::sha256_hex(bytes);
    }
    auto qbytes = encode_queue(queue);
    files::write_atomic(dir / "queue.bin", qbytes);
    hashes["queue.bin"] = files::sha256_hex(qbytes);
    if (optimizer) {
        torch::serialize::OutputArchive archive;
        optimizer->save(archive);
        std::ostringstream os;
        archive.save_to(os);
        const auto s = os.str();
        files::write_atomic(dir / "optimizer.pt", std::string_view(s));
        hashes["optimizer.pt"] = files::sha256_hex(
            std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
    }
    meta["groups"] = groups;
    meta["files"] = hashes;
    // metadata last: its presence marks a complete checkpoint
    files::write_atomic(dir / "metadata.json", meta.dump(2));
}

LoadedCheckpoint load_checkpoint(const fs::path& dir, const std::optional<ModelConfig>& expected) {
    const auto meta_path = dir / "metadata.json";
    if (!fs::exists(meta_path)) throw IntegrityError("missing checkpoint file " + meta_path.string());
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(files::read_text(meta_path));
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError(meta_path.string() + ": " + e.what());
    }
    LoadedCheckpoint out;
    ModelConfig config;
    try {
        if (meta.at("schema_version").get<int>() != kCheckpointVersion) {
            throw IntegrityError(meta_path.string() + ": unsupported schema version");
        }
        config = model_config_from_json(meta.at("config"));
        out.info.step = meta.at("step").get<std::int64_t>();
        out.info.phase = meta.at("phase").get<std::string>();
        out.info.extra = meta.value("extra", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError(meta_path.string() + ": " + e.what());
    } catch (const ConfigError& e) {
        throw IntegrityError(meta_path.string() + ": " + e.what());
    }
    if (expected) {
        auto want = *expected;
        want.seed = config.seed;  // the seed is a run property, not architecture
        if (!(want == config)) {
            throw ConfigMismatchError("checkpoint " + dir.string() + " was saved with a different model config");
        }
    }

    const auto& hashes = meta.at("files");
    auto verified = [&](const std::string& file) {
        auto bytes = read_bytes(dir / file);
        if (!hashes.contains(file)) throw IntegrityError((dir / file).string() + ": not listed in metadata");
        if (files::sha256_hex(bytes) != hashes.at(file).get<std::string>()) {
            throw IntegrityError((dir / file).string() + ": sha256 mismatch");
        }
        return bytes;
    };

    out.model = T2VModel(config);
    for (auto g : kParamGroups) {
        const std::string file = std::string(to_string(g)) + ".bin";
        auto stored = decode_tensors(verified(file), (dir / file).string());
        auto params = out.model->group_parameters(g);
        if (stored.size() != params.size()) throw IntegrityError((dir / file).string() + ": parameter count differs");
        torch::NoGradGuard no_grad;
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (stored[i].first != params[i].first || stored[i].second.sizes() != params[i].second.sizes() ||
                stored[i].second.scalar_type() != params[i].second.scalar_type()) {
                throw IntegrityError((dir / file).string() + ": tensor '" + stored[i].first + "' does not fit");
            }
            params[i].second.copy_(stored[i].second);
        }
    }
    if (meta.value("spatial_frozen", false)) out.model->freeze_spatial();
    out.queue = decode_queue(verified("queue.bin"), (dir / "queue.bin").string());
    if (hashes.contains("optimizer.pt")) {
        verified("optimizer.pt");
        out.optimizer_state = dir / "optimizer.pt";
    }
    return out;
}

void load_optimizer_state(torch::optim::Optimizer& optimizer, const fs::path& path) {
    try {
        torch::serialize::InputArchive archive;
        archive.load_from(path.string());
        optimizer.load(archive);
    } catch (const c10::Error& e) {
        throw IntegrityError(path.string() + ": " + e.what_without_backtrace());
    }
}

}  // namespace harivo
