#pragma once

// Binary parameter container, little-endian:
//
//   "GDAP"  u32 version (1)  u32 count
//   count x { u32 name_len, name bytes, u64 rows, u64 cols, rows*cols f64 }

#include <algorithm>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gda/error.hpp"
#include "gda/io.hpp"
#include "gda/matrix.hpp"
#include "gda/trainer.hpp"

namespace gda {

inline constexpr char kSnapshotMagic[4] = {'G', 'D', 'A', 'P'};
inline constexpr std::uint32_t kSnapshotVersion = 1;

struct SnapshotEntry {
    std::string name;
    Matrix value;
};

namespace detail {

inline void put_le(std::string& out, std::uint64_t v, int bytes) {
    for (int b = 0; b < bytes; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

class ByteReader {
public:
    explicit ByteReader(std::string_view data) : data_(data) {}

    std::uint64_t take(int bytes) {
        need(static_cast<std::size_t>(bytes));
        std::uint64_t v = 0;
        for (int b = 0; b < bytes; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + b])) << (8 * b);
        pos_ += static_cast<std::size_t>(bytes);
        return v;
    }

    std::string_view bytes(std::size_t n) {
        need(n);
        auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == data_.size(); }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw ValidationError("parameter snapshot is truncated");
    }

    std::string_view data_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_snapshot(const std::vector<SnapshotEntry>& entries) {
    std::string out(kSnapshotMagic, 4);
    detail::put_le(out, kSnapshotVersion, 4);
    detail::put_le(out, entries.size(), 4);
    for (const auto& e : entries) {
        detail::put_le(out, e.name.size(), 4);
        out += e.name;
        detail::put_le(out, e.value.rows, 8);
        detail::put_le(out, e.value.cols, 8);
        for (double v : e.value.data) detail::put_le(out, std::bit_cast<std::uint64_t>(v), 8);
    }
    return out;
}

inline std::vector<SnapshotEntry> decode_snapshot(std::string_view data) {
    detail::ByteReader in(data);
    if (in.bytes(4) != std::string_view(kSnapshotMagic, 4)) throw ValidationError("not a parameter snapshot (bad magic)");
    const auto version = in.take(4);
    if (version != kSnapshotVersion)
        throw ValidationError("unsupported parameter snapshot version " + std::to_string(version));
    const auto count = in.take(4);
    std::vector<SnapshotEntry> out;
    for (std::uint64_t k = 0; k < count; ++k) {
        SnapshotEntry e;
        e.name = std::string(in.bytes(in.take(4)));
        const auto rows = in.take(8), cols = in.take(8);
        if (cols != 0 && rows > in.remaining() / 8 / cols) throw ValidationError("parameter snapshot is truncated");
        e.value = Matrix(rows, cols);
        for (double& v : e.value.data) v = std::bit_cast<double>(in.take(8));
        out.push_back(std::move(e));
    }
    if (!in.done()) throw ValidationError("trailing bytes after parameter snapshot");
    return out;
}

inline void save_snapshot(const std::filesystem::path& path, const std::vector<SnapshotEntry>& entries) {
    io::write_file_atomic(path, encode_snapshot(entries));
}

inline std::vector<SnapshotEntry> load_snapshot(const std::filesystem::path& path) {
    return decode_snapshot(io::read_file(path));
}

/// Snapshot entries for every parameter of a model, names prefixed with `prefix`.
inline std::vector<SnapshotEntry> model_entries(Model& model, const std::string& prefix = "") {
    std::vector<SnapshotEntry> out;
    for (const auto& p : model.params()) out.push_back({prefix + p.name, *p.value});
    return out;
}

/// Rebuilds the model a config trains on graph g from entries named `prefix + parameter name`.
inline Model restore_model(const std::vector<SnapshotEntry>& entries, const ExperimentConfig& cfg,
                           const SparseGraph& g, const std::string& prefix = "") {
    Model m;
    m.encoder_config = resolve_encoder(cfg.encoder, g);
    Rng shapes_only(0);
    m.encoder = init_params(m.encoder_config, shapes_only);
    if (cfg.align.kind == AlignKind::Adversarial)
        m.discriminator = init_discriminator(m.encoder_config.hidden, cfg.align.disc_hidden, shapes_only);
    if (cfg.unsup.kind == UnsupKind::Cl)
        m.projection = init_projection(m.encoder_config.hidden, cfg.unsup.proj_dim, shapes_only);
    for (const auto& p : m.params()) {
        const std::string want = prefix + p.name;
        auto it = std::find_if(entries.begin(), entries.end(), [&](const SnapshotEntry& e) { return e.name == want; });
        if (it == entries.end()) throw ValidationError("parameter snapshot has no entry '" + want + "'");
        if (!it->value.same_shape(*p.value))
            throw ValidationError("parameter '" + want + "' has shape " + shape_str(it->value) + ", expected " +
                                  shape_str(*p.value));
        *p.value = it->value;
    }
    return m;
}

}  // namespace gda
