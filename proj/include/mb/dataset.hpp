#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mb/error.hpp"
#include "mb/io.hpp"
#include "mb/rng.hpp"
#include "mb/tensor.hpp"

namespace mb {

inline constexpr int kDatasetFormatVersion = 1;

enum class CloudKind : std::uint8_t { none, thin, thick };
enum class SplitTag : std::uint8_t { unassigned, train_labeled, train_unlabeled, test };

inline const char* cloud_kind_name(CloudKind k) {
    switch (k) {
        case CloudKind::none: return "none";
        case CloudKind::thin: return "thin";
        case CloudKind::thick: return "thick";
    }
    return "?";
}

inline const char* split_tag_name(SplitTag s) {
    switch (s) {
        case SplitTag::unassigned: return "unassigned";
        case SplitTag::train_labeled: return "train-labeled";
        case SplitTag::train_unlabeled: return "train-unlabeled";
        case SplitTag::test: return "test";
    }
    return "?";
}

template <class E>
E enum_from_name(const std::string& s, std::initializer_list<std::pair<const char*, E>> table,
                 const char* what) {
    for (const auto& [name, v] : table)
        if (s == name) return v;
    throw DataError(std::string("unknown ") + what + ": " + s);
}

struct SampleMeta {
    int id = 0;
    int label = -1;
    SplitTag split = SplitTag::unassigned;
    bool cloud_covered = false;
    double cloud_coverage = 0.0;
    CloudKind cloud_kind = CloudKind::none;
};

struct DatasetManifest {
    int format_version = kDatasetFormatVersion;
    std::vector<std::string> class_names;
    int opt_channels = 3;
    int sar_channels = 3;
    int height = 0;
    int width = 0;
    int shard_size = 512;
    std::vector<SampleMeta> samples;
    // seed provenance, zero when a stage has not been applied
    std::uint64_t gen_seed = 0;
    std::uint64_t mask_seed = 0;
    std::uint64_t split_seed = 0;
    // split spec snapshot; labeled_per_class < 0 means no split applied yet
    int split_labeled_per_class = -1;
    double split_test_fraction = 0.0;

    int num_classes() const { return static_cast<int>(class_names.size()); }
    int size() const { return static_cast<int>(samples.size()); }
};

// Paired two-modality dataset held in memory: opt (N, C_opt, H, W) in [0, 1],
// sar (N, C_sar, H, W). Loaded datasets are immutable by convention; the
// cloud simulator returns a modified copy.
struct Dataset {
    DatasetManifest manifest;
    TensorF opt;
    TensorF sar;

    std::size_t opt_sample_size() const {
        return static_cast<std::size_t>(manifest.opt_channels) * manifest.height * manifest.width;
    }
    std::size_t sar_sample_size() const {
        return static_cast<std::size_t>(manifest.sar_channels) * manifest.height * manifest.width;
    }
};

inline std::vector<int> indices_of(const DatasetManifest& m, SplitTag tag) {
    std::vector<int> out;
    for (const auto& s : m.samples)
        if (s.split == tag) out.push_back(s.id);
    return out;
}

inline void validate_manifest(const DatasetManifest& m) {
    if (m.class_names.empty()) throw DataError("manifest: no classes");
    if (m.height < 1 || m.width < 1) throw DataError("manifest: bad image size");
    if (m.shard_size < 1) throw DataError("manifest: bad shard size");
    int labeled_with_unassigned = 0;
    std::vector<int> labeled_per_class(m.class_names.size(), 0);
    for (const auto& s : m.samples) {
        if (s.id < 0 || s.id >= m.size()) throw DataError("manifest: bad sample id");
        if (s.label < -1 || s.label >= m.num_classes())
            throw DataError("manifest: label out of range for sample " + std::to_string(s.id));
        if (s.cloud_covered != (s.cloud_coverage > 0.0))
            throw DataError("manifest: cloud_covered flag inconsistent for sample " +
                            std::to_string(s.id));
        if ((s.cloud_kind == CloudKind::none) != (s.cloud_coverage == 0.0))
            throw DataError("manifest: cloud kind inconsistent for sample " + std::to_string(s.id));
        if (s.split == SplitTag::unassigned) ++labeled_with_unassigned;
        if (s.split == SplitTag::train_labeled && s.label >= 0)
            ++labeled_per_class[static_cast<std::size_t>(s.label)];
    }
    // split sets must be disjoint (trivially true, one tag each) and cover all
    // samples once any assignment has happened
    if (labeled_with_unassigned != 0 && labeled_with_unassigned != m.size())
        throw DataError("manifest: split does not cover all samples");
    if (m.split_labeled_per_class >= 0) {
        for (std::size_t c = 0; c < labeled_per_class.size(); ++c)
            if (labeled_per_class[c] != m.split_labeled_per_class)
                throw DataError("manifest: class " + m.class_names[c] + " has " +
                                std::to_string(labeled_per_class[c]) +
                                " labeled samples, split spec says " +
                                std::to_string(m.split_labeled_per_class));
    }
}

// ---------------------------------------------------------------------------
// on-disk format: <dir>/manifest.json + opt/shard_NNN.bin + sar/shard_NNN.bin
// (raw little-endian float32), with per-shard CRC32 recorded in the manifest
// ---------------------------------------------------------------------------

namespace detail {

inline std::string shard_name(const char* modality, int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s/shard_%03d.bin", modality, index);
    return buf;
}

inline nlohmann::json sample_to_json(const SampleMeta& s) {
    return nlohmann::json{{"id", s.id},
                          {"label", s.label},
                          {"split", split_tag_name(s.split)},
                          {"cloud_covered", s.cloud_covered},
                          {"cloud_coverage", s.cloud_coverage},
                          {"cloud_kind", cloud_kind_name(s.cloud_kind)}};
}

inline SampleMeta sample_from_json(const nlohmann::json& j) {
    SampleMeta s;
    s.id = j.at("id").get<int>();
    s.label = j.at("label").get<int>();
    s.split = enum_from_name<SplitTag>(j.at("split").get<std::string>(),
                                       {{"unassigned", SplitTag::unassigned},
                                        {"train-labeled", SplitTag::train_labeled},
                                        {"train-unlabeled", SplitTag::train_unlabeled},
                                        {"test", SplitTag::test}},
                                       "split tag");
    s.cloud_covered = j.at("cloud_covered").get<bool>();
    s.cloud_coverage = j.at("cloud_coverage").get<double>();
    s.cloud_kind = enum_from_name<CloudKind>(j.at("cloud_kind").get<std::string>(),
                                             {{"none", CloudKind::none},
                                              {"thin", CloudKind::thin},
                                              {"thick", CloudKind::thick}},
                                             "cloud kind");
    return s;
}

inline std::map<std::string, std::uint32_t> write_shards(const std::filesystem::path& dir,
                                                         const char* modality, const TensorF& t,
                                                         std::size_t sample_size, int n,
                                                         int shard_size) {
    std::map<std::string, std::uint32_t> crcs;
    std::filesystem::create_directories(dir / modality);
    for (int start = 0, idx = 0; start < n; start += shard_size, ++idx) {
        const int count = std::min(shard_size, n - start);
        const auto name = shard_name(modality, idx);
        const float* base = t.ptr() + static_cast<std::size_t>(start) * sample_size;
        const std::size_t bytes = static_cast<std::size_t>(count) * sample_size * sizeof(float);
        write_file_bytes(dir / name, base, bytes);
        crcs[name] = crc32(base, bytes);
    }
    return crcs;
}

inline void read_shards(const std::filesystem::path& dir, const char* modality, TensorF& t,
                        std::size_t sample_size, int n, int shard_size,
                        const std::map<std::string, std::uint32_t>& crcs) {
    for (int start = 0, idx = 0; start < n; start += shard_size, ++idx) {
        const int count = std::min(shard_size, n - start);
        const auto name = shard_name(modality, idx);
        const auto bytes = read_file_bytes(dir / name);
        const std::size_t expect = static_cast<std::size_t>(count) * sample_size * sizeof(float);
        if (bytes.size() != expect)
            throw DataError("shard size mismatch: " + name + " (sample ids " +
                            std::to_string(start) + ".." + std::to_string(start + count - 1) + ")");
        const auto it = crcs.find(name);
        if (it == crcs.end()) throw DataError("manifest missing checksum for " + name);
        if (crc32(bytes.data(), bytes.size()) != it->second)
            throw ChecksumError("checksum mismatch in " + name);
        std::memcpy(t.ptr() + static_cast<std::size_t>(start) * sample_size, bytes.data(),
                    bytes.size());
    }
}

}  // namespace detail

inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    validate_manifest(ds.manifest);
    std::filesystem::create_directories(dir);
    const auto& m = ds.manifest;
    auto crcs = detail::write_shards(dir, "opt", ds.opt, ds.opt_sample_size(), m.size(),
                                     m.shard_size);
    auto sar_crcs = detail::write_shards(dir, "sar", ds.sar, ds.sar_sample_size(), m.size(),
                                         m.shard_size);
    crcs.insert(sar_crcs.begin(), sar_crcs.end());

    nlohmann::json j;
    j["format_version"] = m.format_version;
    j["class_names"] = m.class_names;
    j["opt_channels"] = m.opt_channels;
    j["sar_channels"] = m.sar_channels;
    j["height"] = m.height;
    j["width"] = m.width;
    j["shard_size"] = m.shard_size;
    j["seeds"] = {{"gen", m.gen_seed}, {"mask", m.mask_seed}, {"split", m.split_seed}};
    j["split_spec"] = {{"labeled_per_class", m.split_labeled_per_class},
                       {"test_fraction", m.split_test_fraction}};
    j["checksums"] = crcs;
    auto samples = nlohmann::json::array();
    for (const auto& s : m.samples) samples.push_back(detail::sample_to_json(s));
    j["samples"] = std::move(samples);
    write_text_file(dir / "manifest.json", j.dump(1) + "\n");
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    if (!std::filesystem::exists(manifest_path))
        throw MissingFileError("missing file: " + manifest_path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("manifest parse error: " + std::string(e.what()));
    }
    Dataset ds;
    auto& m = ds.manifest;
    try {
        m.format_version = j.at("format_version").get<int>();
        if (m.format_version != kDatasetFormatVersion)
            throw VersionMismatchError("dataset format version " +
                                       std::to_string(m.format_version) + " unsupported (want " +
                                       std::to_string(kDatasetFormatVersion) + ")");
        m.class_names = j.at("class_names").get<std::vector<std::string>>();
        m.opt_channels = j.at("opt_channels").get<int>();
        m.sar_channels = j.at("sar_channels").get<int>();
        m.height = j.at("height").get<int>();
        m.width = j.at("width").get<int>();
        m.shard_size = j.at("shard_size").get<int>();
        m.gen_seed = j.at("seeds").at("gen").get<std::uint64_t>();
        m.mask_seed = j.at("seeds").at("mask").get<std::uint64_t>();
        m.split_seed = j.at("seeds").at("split").get<std::uint64_t>();
        m.split_labeled_per_class = j.at("split_spec").at("labeled_per_class").get<int>();
        m.split_test_fraction = j.at("split_spec").at("test_fraction").get<double>();
        for (const auto& sj : j.at("samples")) m.samples.push_back(detail::sample_from_json(sj));
        const auto crcs = j.at("checksums").get<std::map<std::string, std::uint32_t>>();
        validate_manifest(m);
        const int n = m.size();
        ds.opt = TensorF({n, m.opt_channels, m.height, m.width});
        ds.sar = TensorF({n, m.sar_channels, m.height, m.width});
        detail::read_shards(dir, "opt", ds.opt, ds.opt_sample_size(), n, m.shard_size, crcs);
        detail::read_shards(dir, "sar", ds.sar, ds.sar_sample_size(), n, m.shard_size, crcs);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("manifest field error: " + std::string(e.what()));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// split
// ---------------------------------------------------------------------------

// Stratified-random test split, then exactly labeled_per_class labeled
// training samples per class; the rest of train becomes the unlabeled pool.
inline Dataset split_dataset(const Dataset& ds, double test_fraction, int labeled_per_class,
                             std::uint64_t seed) {
    if (test_fraction < 0.0 || test_fraction > 1.0)
        throw InvalidInputError("split: test_fraction outside [0, 1]");
    if (labeled_per_class < 0) throw InvalidInputError("split: negative labeled_per_class");
    Dataset out = ds;
    auto& m = out.manifest;
    std::vector<std::vector<int>> per_class(static_cast<std::size_t>(m.num_classes()));
    for (const auto& s : m.samples) {
        if (s.label < 0) throw InvalidInputError("split: sample without label");
        per_class[static_cast<std::size_t>(s.label)].push_back(s.id);
    }
    for (int c = 0; c < m.num_classes(); ++c) {
        auto& ids = per_class[static_cast<std::size_t>(c)];
        Rng rng(derive_seed(seed, "split-class", static_cast<std::uint64_t>(c)));
        rng.shuffle(ids);
        const int n_c = static_cast<int>(ids.size());
        const int n_test = static_cast<int>(std::llround(test_fraction * n_c));
        if (n_c - n_test < labeled_per_class)
            throw InvalidInputError("split: class " + m.class_names[static_cast<std::size_t>(c)] +
                                    " has " + std::to_string(n_c - n_test) +
                                    " train samples, needs " + std::to_string(labeled_per_class));
        for (int i = 0; i < n_c; ++i) {
            SplitTag tag = i < n_test                           ? SplitTag::test
                           : i < n_test + labeled_per_class     ? SplitTag::train_labeled
                                                                : SplitTag::train_unlabeled;
            m.samples[static_cast<std::size_t>(ids[static_cast<std::size_t>(i)])].split = tag;
        }
    }
    m.split_seed = seed;
    m.split_labeled_per_class = labeled_per_class;
    m.split_test_fraction = test_fraction;
    return out;
}

// ---------------------------------------------------------------------------
// batch assembly
// ---------------------------------------------------------------------------

namespace detail {
inline TensorF gather(const TensorF& t, std::size_t sample_size, int channels, int h, int w,
                      const std::vector<int>& ids) {
    TensorF out({static_cast<int>(ids.size()), channels, h, w});
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::copy_n(t.ptr() + static_cast<std::size_t>(ids[i]) * sample_size, sample_size,
                    out.ptr() + i * sample_size);
    return out;
}
}  // namespace detail

inline TensorF gather_optical(const Dataset& ds, const std::vector<int>& ids) {
    const auto& m = ds.manifest;
    return detail::gather(ds.opt, ds.opt_sample_size(), m.opt_channels, m.height, m.width, ids);
}

inline TensorF gather_sar(const Dataset& ds, const std::vector<int>& ids) {
    const auto& m = ds.manifest;
    return detail::gather(ds.sar, ds.sar_sample_size(), m.sar_channels, m.height, m.width, ids);
}

// Early fusion: optical channels then SAR channels, per sample.
inline TensorF gather_fused(const Dataset& ds, const std::vector<int>& ids) {
    const auto& m = ds.manifest;
    const std::size_t opt_sz = ds.opt_sample_size(), sar_sz = ds.sar_sample_size();
    TensorF out({static_cast<int>(ids.size()), m.opt_channels + m.sar_channels, m.height, m.width});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        float* dst = out.ptr() + i * (opt_sz + sar_sz);
        std::copy_n(ds.opt.ptr() + static_cast<std::size_t>(ids[i]) * opt_sz, opt_sz, dst);
        std::copy_n(ds.sar.ptr() + static_cast<std::size_t>(ids[i]) * sar_sz, sar_sz, dst + opt_sz);
    }
    return out;
}

inline std::vector<int> labels_of(const Dataset& ds, const std::vector<int>& ids) {
    std::vector<int> out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(ds.manifest.samples[static_cast<std::size_t>(id)].label);
    return out;
}

}  // namespace mb
