#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mb/dataset.hpp"
#include "mb/error.hpp"
#include "mb/io.hpp"
#include "mb/rng.hpp"
#include "mb/synthetic.hpp"

namespace mb {

// Alpha mask over the optical image. Thick masks are binary {0, 1}; thin
// masks blend fractionally. Coverage of a mask is its mean alpha.
struct CloudMask {
    TensorF alpha;  // (H, W)
    CloudKind kind = CloudKind::none;

    double coverage() const {
        double s = 0;
        for (float v : alpha.data) s += v;
        return alpha.numel() ? s / static_cast<double>(alpha.numel()) : 0.0;
    }
};

// Mask shapes come either from seeded procedural fields or from user-supplied
// alpha images; both are rescaled at apply time to hit the target coverage.
struct MaskLibrary {
    bool procedural = true;
    std::vector<TensorF> thin_shapes;   // (H, W) intensity fields, any scale
    std::vector<TensorF> thick_shapes;  // likewise; thresholded at apply time
};

// Directory layout: <dir>/index.json with {"masks": [{"file", "kind", "height",
// "width"}...]}, raw float32 files alongside.
inline MaskLibrary load_mask_library(const std::filesystem::path& dir) {
    MaskLibrary lib;
    lib.procedural = false;
    const auto index_path = dir / "index.json";
    if (!std::filesystem::exists(index_path))
        throw ConfigError("mask library: missing " + index_path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(index_path));
        for (const auto& e : j.at("masks")) {
            const auto file = e.at("file").get<std::string>();
            const int h = e.at("height").get<int>();
            const int w = e.at("width").get<int>();
            const auto kind = e.at("kind").get<std::string>();
            const auto bytes = read_file_bytes(dir / file);
            if (bytes.size() != static_cast<std::size_t>(h) * w * sizeof(float))
                throw ConfigError("mask library: size mismatch in " + file);
            TensorF t({h, w});
            std::memcpy(t.ptr(), bytes.data(), bytes.size());
            if (kind == "thin")
                lib.thin_shapes.push_back(std::move(t));
            else if (kind == "thick")
                lib.thick_shapes.push_back(std::move(t));
            else
                throw ConfigError("mask library: unknown kind " + kind);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("mask library: bad index.json: " + std::string(e.what()));
    }
    return lib;
}

namespace detail {

// Nearest-neighbour resample of a shape field to (h, w).
inline TensorF resample_shape(const TensorF& src, int h, int w) {
    const int sh = src.dim(0), sw = src.dim(1);
    TensorF out({h, w});
    for (int y = 0; y < h; ++y) {
        const int sy = std::min(sh - 1, y * sh / h);
        for (int x = 0; x < w; ++x) {
            const int sx = std::min(sw - 1, x * sw / w);
            out[static_cast<std::size_t>(y) * w + x] = src[static_cast<std::size_t>(sy) * sw + sx];
        }
    }
    return out;
}

// Exactly round(coverage * H * W) pixels set to 1, chosen as the largest
// field values.
inline TensorF threshold_to_coverage(const TensorF& field, double coverage) {
    const std::size_t px = field.numel();
    const auto n_on = static_cast<std::size_t>(
        std::llround(coverage * static_cast<double>(px)));
    TensorF alpha(field.shape);
    if (n_on == 0) return alpha;
    if (n_on >= px) {
        alpha.fill(1.0f);
        return alpha;
    }
    std::vector<float> sorted(field.data);
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n_on - 1),
                     sorted.end(), std::greater<float>());
    const float thr = sorted[n_on - 1];
    std::size_t on = 0;
    for (std::size_t i = 0; i < px; ++i)
        if (field[i] > thr) {
            alpha[i] = 1.0f;
            ++on;
        }
    // ties at the threshold: fill deterministically in index order
    for (std::size_t i = 0; i < px && on < n_on; ++i)
        if (alpha[i] == 0.0f && field[i] == thr) {
            alpha[i] = 1.0f;
            ++on;
        }
    return alpha;
}

// Scale a non-negative shape so mean(min(1, s * shape)) hits the coverage
// target; bisection, exact to ~1e-6.
inline TensorF scale_to_coverage(const TensorF& shape, double coverage) {
    TensorF alpha(shape.shape);
    if (coverage <= 0.0) return alpha;
    float maxv = 0;
    for (float v : shape.data) maxv = std::max(maxv, v);
    if (maxv <= 0) throw InvalidInputError("cloud mask shape has no positive values");
    auto mean_at = [&](double s) {
        double m = 0;
        for (float v : shape.data) m += std::min(1.0, s * static_cast<double>(v));
        return m / static_cast<double>(shape.numel());
    };
    double lo = 0.0, hi = 1.0 / static_cast<double>(maxv);
    while (mean_at(hi) < coverage && hi < 1e12) hi *= 2.0;
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        (mean_at(mid) < coverage ? lo : hi) = mid;
    }
    const double s = 0.5 * (lo + hi);
    for (std::size_t i = 0; i < shape.numel(); ++i)
        alpha[i] = static_cast<float>(std::min(1.0, s * static_cast<double>(shape[i])));
    return alpha;
}

// Shifted smooth field, non-negative with a zero minimum.
inline TensorF positive_smooth_shape(Rng& rng, int h, int w) {
    auto field = smooth_field(rng, h, w, 4);
    float minv = field[0];
    for (float v : field) minv = std::min(minv, v);
    TensorF shape({h, w});
    for (std::size_t i = 0; i < shape.numel(); ++i) shape[i] = field[i] - minv;
    return shape;
}

}  // namespace detail

inline CloudMask make_cloud_mask(CloudKind kind, int h, int w, double coverage,
                                 const MaskLibrary& lib, Rng& rng) {
    if (kind == CloudKind::none) throw InvalidInputError("make_cloud_mask: kind none");
    CloudMask mask;
    mask.kind = kind;
    TensorF shape;
    if (lib.procedural) {
        shape = detail::positive_smooth_shape(rng, h, w);
    } else {
        const auto& pool = kind == CloudKind::thin ? lib.thin_shapes : lib.thick_shapes;
        if (pool.empty())
            throw ConfigError(std::string("mask library has no ") + cloud_kind_name(kind) +
                              " masks");
        const auto& src = pool[static_cast<std::size_t>(rng.next_below(pool.size()))];
        shape = detail::resample_shape(src, h, w);
        float minv = shape[0];
        for (float v : shape.data) minv = std::min(minv, v);
        for (auto& v : shape.data) v -= minv;
    }
    mask.alpha = kind == CloudKind::thick ? detail::threshold_to_coverage(shape, coverage)
                                          : detail::scale_to_coverage(shape, coverage);
    return mask;
}

// Contaminates round(image_level_fraction * N) optical images: thick masks
// saturate pixels to white, thin masks alpha-blend toward white. SAR is never
// touched. Cloud metadata reflects realized coverage (mean alpha).
inline Dataset apply_cloud_masks(const Dataset& input, double image_level_fraction,
                                 double per_sample_coverage, double thin_thick_ratio,
                                 const MaskLibrary& lib, std::uint64_t seed) {
    if (image_level_fraction < 0.0 || image_level_fraction > 1.0)
        throw InvalidInputError("apply_cloud_masks: fraction outside [0, 1]");
    if (per_sample_coverage < 0.0 || per_sample_coverage > 1.0)
        throw InvalidInputError("apply_cloud_masks: coverage outside [0, 1]");
    if (thin_thick_ratio < 0.0) throw InvalidInputError("apply_cloud_masks: negative ratio");
    if (!lib.procedural && lib.thin_shapes.empty() && lib.thick_shapes.empty())
        throw ConfigError("apply_cloud_masks: empty mask library");

    Dataset out = input;
    auto& m = out.manifest;
    const int n = m.size();
    const int h = m.height, w = m.width;
    const auto n_masked = static_cast<int>(std::llround(image_level_fraction * n));
    const auto n_thin = static_cast<int>(
        std::llround(n_masked * (thin_thick_ratio / (1.0 + thin_thick_ratio))));

    std::vector<int> ids(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = i;
    Rng select_rng(derive_seed(seed, "mask-select"));
    select_rng.shuffle(ids);
    ids.resize(static_cast<std::size_t>(n_masked));

    std::vector<CloudKind> kinds(static_cast<std::size_t>(n_masked), CloudKind::thick);
    for (int i = 0; i < n_thin; ++i) kinds[static_cast<std::size_t>(i)] = CloudKind::thin;
    Rng kind_rng(derive_seed(seed, "mask-kinds"));
    kind_rng.shuffle(kinds);

    const std::size_t opt_sz = out.opt_sample_size();
    const std::size_t px = static_cast<std::size_t>(h) * w;
    for (int i = 0; i < n_masked; ++i) {
        const int id = ids[static_cast<std::size_t>(i)];
        Rng rng(derive_seed(seed, "mask", static_cast<std::uint64_t>(id)));
        const auto mask =
            make_cloud_mask(kinds[static_cast<std::size_t>(i)], h, w, per_sample_coverage, lib,
                            rng);
        float* base = out.opt.ptr() + static_cast<std::size_t>(id) * opt_sz;
        for (int ch = 0; ch < m.opt_channels; ++ch) {
            float* dst = base + static_cast<std::size_t>(ch) * px;
            for (std::size_t p = 0; p < px; ++p) dst[p] += mask.alpha[p] * (1.0f - dst[p]);
        }
        auto& meta = m.samples[static_cast<std::size_t>(id)];
        meta.cloud_coverage = mask.coverage();
        meta.cloud_covered = meta.cloud_coverage > 0.0;
        meta.cloud_kind = meta.cloud_covered ? mask.kind : CloudKind::none;
    }
    m.mask_seed = seed;
    return out;
}

}  // namespace mb
