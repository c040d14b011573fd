#pragma once
// Versioned named-tensor checkpoints.
//
// Byte layout (all integers little-endian):
//   8 bytes   magic "DRNCKPT1"
//   u32       format version (1)
//   u32       metadata length, then that many bytes of "key=value\n" text
//   u32       tensor count
//   per tensor:
//     u32 name length, name bytes (UTF-8)
//     u32 rank, rank x u32 dims
//     prod(dims) x IEEE-754 binary32 payload

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "drn/model.hpp"
#include "drn/png.hpp"

namespace drn {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::array<char, 8> kCheckpointMagic{'D', 'R', 'N', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointTensor {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<float> values;
};

struct Checkpoint {
    std::vector<std::pair<std::string, std::string>> metadata;
    std::vector<CheckpointTensor> tensors;

    [[nodiscard]] const std::string* find_meta(const std::string& key) const {
        for (const auto& [k, v] : metadata)
            if (k == key) return &v;
        return nullptr;
    }
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class ByteReader {
public:
    explicit ByteReader(std::string bytes) : bytes_(std::move(bytes)) {}

    std::uint32_t u32() {
        const auto* p = reinterpret_cast<const unsigned char*>(take(4));
        return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
               (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    }
    std::string str(std::size_t n) { return std::string(take(n), n); }
    [[nodiscard]] bool done() const { return pos_ == bytes_.size(); }

private:
    const char* take(std::size_t n) {
        if (bytes_.size() - pos_ < n) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
        const char* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }

    std::string bytes_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize(const Checkpoint& ckpt) {
    std::string out(kCheckpointMagic.begin(), kCheckpointMagic.end());
    detail::put_u32(out, kCheckpointVersion);
    std::string meta;
    for (const auto& [k, v] : ckpt.metadata) meta += k + "=" + v + "\n";
    detail::put_u32(out, static_cast<std::uint32_t>(meta.size()));
    out += meta;
    detail::put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& t : ckpt.tensors) {
        detail::put_u32(out, static_cast<std::uint32_t>(t.name.size()));
        out += t.name;
        detail::put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
        for (auto d : t.dims) detail::put_u32(out, d);
        for (float v : t.values) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

inline Checkpoint deserialize(std::string bytes) {
    if (bytes.size() < kCheckpointMagic.size() ||
        std::memcmp(bytes.data(), kCheckpointMagic.data(), kCheckpointMagic.size()) != 0)
        throw FormatError("not a DRN checkpoint (bad magic)");
    detail::ByteReader in(bytes.substr(kCheckpointMagic.size()));
    const std::uint32_t version = in.u32();
    if (version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ckpt;
    std::istringstream meta(in.str(in.u32()));
    for (std::string line; std::getline(meta, line);) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("malformed checkpoint metadata line '" + line + "'");
        ckpt.metadata.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    const std::uint32_t count = in.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointTensor t;
        t.name = in.str(in.u32());
        const std::uint32_t rank = in.u32();
        std::uint64_t numel = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            t.dims.push_back(in.u32());
            numel *= t.dims.back();
        }
        if (numel > (std::uint64_t{1} << 34)) throw FormatError("tensor '" + t.name + "' is implausibly large");
        t.values.resize(static_cast<std::size_t>(numel));
        for (auto& v : t.values) v = std::bit_cast<float>(in.u32());
        ckpt.tensors.push_back(std::move(t));
    }
    if (!in.done()) throw FormatError("trailing bytes after checkpoint payload");
    return ckpt;
}

/// Writes bytes through a temporary file and rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open '" + tmp.string() + "' for writing");
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw IoError("write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline std::vector<std::pair<std::string, std::string>> model_metadata(const DrnConfig& c) {
    std::ostringstream slope;
    slope.precision(9);
    slope << c.slope;
    return {{"model.scale", std::to_string(c.scale)},
            {"model.blocks", std::to_string(c.blocks)},
            {"model.channels", std::to_string(c.channels)},
            {"model.reduction", std::to_string(c.reduction)},
            {"model.slope", slope.str()}};
}

inline DrnConfig config_from_metadata(const Checkpoint& ckpt) {
    auto get = [&](const char* key) {
        const std::string* v = ckpt.find_meta(key);
        if (!v) throw FormatError(std::string("checkpoint metadata lacks '") + key + "'");
        return *v;
    };
    DrnConfig c;
    try {
        c.scale = std::stoll(get("model.scale"));
        c.blocks = std::stoll(get("model.blocks"));
        c.channels = std::stoll(get("model.channels"));
        c.reduction = std::stoll(get("model.reduction"));
        c.slope = std::stof(get("model.slope"));
    } catch (const std::logic_error& e) {
        if (dynamic_cast<const FormatError*>(&e)) throw;
        throw FormatError(std::string("bad model metadata in checkpoint: ") + e.what());
    }
    c.validate();
    return c;
}

/// Snapshot of every model parameter; model config comes first in metadata,
/// followed by `extra`.
inline Checkpoint make_checkpoint(const DrnModel& model,
                                  const std::vector<std::pair<std::string, std::string>>& extra = {}) {
    Checkpoint ckpt;
    ckpt.metadata = model_metadata(model.config);
    ckpt.metadata.insert(ckpt.metadata.end(), extra.begin(), extra.end());
    for (const auto& p : model.parameters()) {
        const Shape s = p.tensor.shape();
        CheckpointTensor t;
        t.name = p.name;
        t.dims = {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c), static_cast<std::uint32_t>(s.h),
                  static_cast<std::uint32_t>(s.w)};
        t.values.assign(p.tensor.data().begin(), p.tensor.data().end());
        ckpt.tensors.push_back(std::move(t));
    }
    return ckpt;
}

inline void checkpoint_save(const DrnModel& model, const std::filesystem::path& path,
                            const std::vector<std::pair<std::string, std::string>>& extra = {}) {
    write_file_atomic(path, serialize(make_checkpoint(model, extra)));
}

inline Checkpoint checkpoint_read(const std::filesystem::path& path) { return deserialize(read_file(path)); }

/// Strict load: every parameter must appear with the same name and shape, and
/// no extra tensors may be present.
inline void load_into(const Checkpoint& ckpt, DrnModel& model) {
    const auto params = model.parameters();
    std::vector<std::string> problems;
    auto note = [&](std::string msg) { problems.push_back(std::move(msg)); };
    for (std::size_t i = 0; i < std::max(params.size(), ckpt.tensors.size()); ++i) {
        if (i >= params.size()) {
            note("unexpected tensor '" + ckpt.tensors[i].name + "'");
            continue;
        }
        if (i >= ckpt.tensors.size()) {
            note("missing tensor '" + params[i].name + "'");
            continue;
        }
        const auto& t = ckpt.tensors[i];
        const Shape s = params[i].tensor.shape();
        if (t.name != params[i].name) {
            note("name mismatch at record " + std::to_string(i) + ": file has '" + t.name + "', model expects '" +
                 params[i].name + "'");
            continue;
        }
        const std::vector<std::uint32_t> want{static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
                                              static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
        if (t.dims != want) {
            std::string got;
            for (auto d : t.dims) got += (got.empty() ? "" : ",") + std::to_string(d);
            note("shape mismatch for '" + t.name + "': file (" + got + ") vs model " + to_string(s));
        }
    }
    if (!problems.empty()) {
        std::string msg = "checkpoint does not match model (" + std::to_string(problems.size()) + " mismatches):";
        for (std::size_t i = 0; i < std::min<std::size_t>(3, problems.size()); ++i) msg += "\n  " + problems[i];
        throw FormatError(msg);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor t = params[i].tensor;
        auto dst = t.mutable_data();
        std::copy(ckpt.tensors[i].values.begin(), ckpt.tensors[i].values.end(), dst.begin());
    }
}

inline void checkpoint_load(const std::filesystem::path& path, DrnModel& model) { load_into(checkpoint_read(path), model); }

/// Rebuilds the model described by a checkpoint's metadata and loads it.
inline DrnModel model_from_checkpoint(const std::filesystem::path& path) {
    const Checkpoint ckpt = checkpoint_read(path);
    DrnModel model = build(config_from_metadata(ckpt), 0);
    load_into(ckpt, model);
    return model;
}

}  // namespace drn
