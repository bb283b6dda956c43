#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mb/error.hpp"
#include "mb/io.hpp"
#include "mb/nn.hpp"

namespace mb {

inline constexpr std::uint32_t kCheckpointMagic = 0x4b43424dU;  // "MBCK"
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    Classifier<float> model;
    std::uint64_t rng_state = 0;
};

inline void save_checkpoint(const std::filesystem::path& path, const Classifier<float>& m,
                            std::uint64_t rng_state) {
    std::vector<std::uint8_t> buf;
    append_pod(buf, kCheckpointMagic);
    append_pod(buf, kCheckpointVersion);
    append_pod(buf, static_cast<std::uint8_t>(m.role));
    append_pod(buf, static_cast<std::int32_t>(m.in_channels));
    append_pod(buf, static_cast<std::int32_t>(m.num_classes));
    append_pod(buf, static_cast<std::int32_t>(m.arch.blocks.size()));
    for (const auto& b : m.arch.blocks) {
        append_pod(buf, static_cast<std::int32_t>(b.out_channels));
        append_pod(buf, static_cast<std::int32_t>(b.kernel));
        append_pod(buf, static_cast<std::int32_t>(b.stride));
    }
    append_pod(buf, rng_state);
    append_pod(buf, static_cast<std::int32_t>(m.params.size()));
    for (const auto& p : m.params) {
        append_pod(buf, static_cast<std::int32_t>(p.shape.size()));
        for (int d : p.shape) append_pod(buf, static_cast<std::int32_t>(d));
        const auto* bytes = reinterpret_cast<const std::uint8_t*>(p.data.data());
        buf.insert(buf.end(), bytes, bytes + p.data.size() * sizeof(float));
    }
    append_pod(buf, crc32(buf.data(), buf.size()));
    write_file_bytes(path, buf.data(), buf.size());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const auto buf = read_file_bytes(path);
    if (buf.size() < 12) throw DataError("checkpoint too short: " + path.string());
    std::size_t off = 0;
    if (read_pod<std::uint32_t>(buf, off) != kCheckpointMagic)
        throw DataError("not a checkpoint file: " + path.string());
    const auto version = read_pod<std::uint32_t>(buf, off);
    if (version != kCheckpointVersion)
        throw VersionMismatchError("checkpoint version " + std::to_string(version) +
                                   " unsupported: " + path.string());
    const std::uint32_t stored_crc = crc32(buf.data(), buf.size() - 4);
    std::size_t crc_off = buf.size() - 4;
    if (read_pod<std::uint32_t>(buf, crc_off) != stored_crc)
        throw ChecksumError("checkpoint checksum mismatch: " + path.string());

    Checkpoint ck;
    ck.model.role = static_cast<Role>(read_pod<std::uint8_t>(buf, off));
    ck.model.in_channels = read_pod<std::int32_t>(buf, off);
    ck.model.num_classes = read_pod<std::int32_t>(buf, off);
    const int nblocks = read_pod<std::int32_t>(buf, off);
    for (int i = 0; i < nblocks; ++i) {
        ConvSpec b;
        b.out_channels = read_pod<std::int32_t>(buf, off);
        b.kernel = read_pod<std::int32_t>(buf, off);
        b.stride = read_pod<std::int32_t>(buf, off);
        ck.model.arch.blocks.push_back(b);
    }
    ck.rng_state = read_pod<std::uint64_t>(buf, off);
    const int nparams = read_pod<std::int32_t>(buf, off);
    for (int i = 0; i < nparams; ++i) {
        const int ndims = read_pod<std::int32_t>(buf, off);
        std::vector<int> shape;
        for (int d = 0; d < ndims; ++d) shape.push_back(read_pod<std::int32_t>(buf, off));
        Tensor<float> p(shape);
        const std::size_t bytes = p.numel() * sizeof(float);
        if (off + bytes > buf.size()) throw DataError("truncated checkpoint: " + path.string());
        std::memcpy(p.data.data(), buf.data() + off, bytes);
        off += bytes;
        ck.model.params.push_back(std::move(p));
    }
    return ck;
}

}  // namespace mb
