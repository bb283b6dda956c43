#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mb/dataset.hpp"
#include "mb/error.hpp"
#include "mb/rng.hpp"
#include "mb/tensor.hpp"

namespace mb {

// Controls for the synthetic paired-modality generator. Each modality carries
// a class-dependent smooth pattern scaled by its informativeness, on top of
// per-sample smooth clutter scaled by its noise level. The redundancy knob
// mixes a cross-modality shared pattern into both modalities, controlling how
// much of the class signal is common vs complementary.
struct GapConfig {
    double informativeness_opt = 0.9;
    double informativeness_sar = 0.6;
    double noise_opt = 1.0;
    double noise_sar = 1.0;
    double redundancy = 0.5;
    int classes = 4;
    int per_class = 500;
    int image_size = 16;
    int sar_channels = 3;

    bool operator==(const GapConfig&) const = default;
};

inline void validate_gap_config(const GapConfig& g) {
    auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in01(g.informativeness_opt) || !in01(g.informativeness_sar))
        throw InvalidInputError("gap config: informativeness outside [0, 1]");
    if (g.informativeness_opt + g.informativeness_sar <= 0.0)
        throw InvalidInputError("gap config: at least one modality must carry signal");
    if (g.noise_opt < 0.0 || g.noise_sar < 0.0)
        throw InvalidInputError("gap config: negative noise level");
    if (!in01(g.redundancy)) throw InvalidInputError("gap config: redundancy outside [0, 1]");
    if (g.classes < 2) throw InvalidInputError("gap config: need at least 2 classes");
    if (g.per_class < 1) throw InvalidInputError("gap config: need at least 1 sample per class");
    if (g.image_size < 4) throw InvalidInputError("gap config: image size too small");
    if (g.sar_channels < 1) throw InvalidInputError("gap config: need at least 1 SAR channel");
}

namespace detail {

// Low-frequency random field: coarse Gaussian grid, bilinear upsample,
// standardized to zero mean / unit RMS.
inline std::vector<float> smooth_field(Rng& rng, int h, int w, int grid = 4) {
    std::vector<double> coarse(static_cast<std::size_t>(grid) * grid);
    for (auto& v : coarse) v = rng.next_normal();
    std::vector<float> field(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        const double gy = (static_cast<double>(y) + 0.5) / h * (grid - 1);
        const int y0 = std::min(static_cast<int>(gy), grid - 2);
        const double fy = gy - y0;
        for (int x = 0; x < w; ++x) {
            const double gx = (static_cast<double>(x) + 0.5) / w * (grid - 1);
            const int x0 = std::min(static_cast<int>(gx), grid - 2);
            const double fx = gx - x0;
            const double v00 = coarse[static_cast<std::size_t>(y0) * grid + x0];
            const double v01 = coarse[static_cast<std::size_t>(y0) * grid + x0 + 1];
            const double v10 = coarse[static_cast<std::size_t>(y0 + 1) * grid + x0];
            const double v11 = coarse[static_cast<std::size_t>(y0 + 1) * grid + x0 + 1];
            field[static_cast<std::size_t>(y) * w + x] = static_cast<float>(
                (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11));
        }
    }
    double mean = 0;
    for (float v : field) mean += v;
    mean /= static_cast<double>(field.size());
    double rms = 0;
    for (float& v : field) {
        v -= static_cast<float>(mean);
        rms += static_cast<double>(v) * v;
    }
    rms = std::sqrt(rms / static_cast<double>(field.size()));
    if (rms > 0)
        for (float& v : field) v = static_cast<float>(v / rms);
    return field;
}

inline void standardize(std::vector<float>& v) {
    double mean = 0;
    for (float x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double rms = 0;
    for (float& x : v) {
        x -= static_cast<float>(mean);
        rms += static_cast<double>(x) * x;
    }
    rms = std::sqrt(rms / static_cast<double>(v.size()));
    if (rms > 0)
        for (float& x : v) x = static_cast<float>(x / rms);
}

// Per-class per-channel pattern: sqrt-mixed shared and private smooth fields,
// re-standardized so redundancy changes overlap, not power.
struct ClassPatterns {
    // [class][channel] -> field of h*w floats
    std::vector<std::vector<std::vector<float>>> opt, sar;
};

inline ClassPatterns make_class_patterns(const GapConfig& g, std::uint64_t seed, int opt_channels) {
    ClassPatterns cp;
    const int h = g.image_size, w = g.image_size;
    const int max_ch = std::max(opt_channels, g.sar_channels);
    const double wr = std::sqrt(g.redundancy), wp = std::sqrt(1.0 - g.redundancy);
    cp.opt.resize(static_cast<std::size_t>(g.classes));
    cp.sar.resize(static_cast<std::size_t>(g.classes));
    for (int c = 0; c < g.classes; ++c) {
        Rng rng(derive_seed(seed, "class-patterns", static_cast<std::uint64_t>(c)));
        std::vector<std::vector<float>> shared;
        for (int ch = 0; ch < max_ch; ++ch) shared.push_back(smooth_field(rng, h, w));
        for (int ch = 0; ch < opt_channels; ++ch) {
            auto priv = smooth_field(rng, h, w);
            auto field = shared[static_cast<std::size_t>(ch)];
            for (std::size_t i = 0; i < field.size(); ++i)
                field[i] = static_cast<float>(wr * field[i] + wp * priv[i]);
            standardize(field);
            cp.opt[static_cast<std::size_t>(c)].push_back(std::move(field));
        }
        for (int ch = 0; ch < g.sar_channels; ++ch) {
            auto priv = smooth_field(rng, h, w);
            auto field = shared[static_cast<std::size_t>(ch)];
            for (std::size_t i = 0; i < field.size(); ++i)
                field[i] = static_cast<float>(wr * field[i] + wp * priv[i]);
            standardize(field);
            cp.sar[static_cast<std::size_t>(c)].push_back(std::move(field));
        }
    }
    return cp;
}

// Scale constants for the pixel model; chosen so that default configs land in
// a regime where linear probes are good but not saturated. The tanh squash
// keeps pixels inside [0, 1] without the hard clipping that would treat the
// two modalities differently.
inline constexpr double kSignalScale = 0.30;
inline constexpr double kClutterScale = 0.75;
inline constexpr double kPixelNoiseScale = 0.12;
inline constexpr double kPixelMid = 0.5;

inline void render_sample(Rng& rng, const std::vector<std::vector<float>>& patterns,
                          double informativeness, double noise_level, double amplitude,
                          int channels, int h, int w, float* out) {
    const std::size_t px = static_cast<std::size_t>(h) * w;
    for (int ch = 0; ch < channels; ++ch) {
        auto clutter = smooth_field(rng, h, w);
        const auto& pat = patterns[static_cast<std::size_t>(ch)];
        float* dst = out + static_cast<std::size_t>(ch) * px;
        for (std::size_t i = 0; i < px; ++i) {
            const double v = kSignalScale * informativeness * amplitude * pat[i] +
                             noise_level * (kClutterScale * clutter[i] +
                                            kPixelNoiseScale * rng.next_normal());
            dst[i] = static_cast<float>(kPixelMid + 0.5 * std::tanh(v));
        }
    }
}

}  // namespace detail

// Class-conditional paired samples. Per-sample RNG streams are derived from
// (seed, sample id), so generation order and worker sharding cannot change
// the result.
inline Dataset generate_synthetic_pairs(const GapConfig& gap, std::uint64_t seed) {
    validate_gap_config(gap);
    const int opt_channels = 3;
    const int n = gap.classes * gap.per_class;
    const int h = gap.image_size, w = gap.image_size;

    Dataset ds;
    auto& m = ds.manifest;
    for (int c = 0; c < gap.classes; ++c) m.class_names.push_back("class_" + std::to_string(c));
    m.opt_channels = opt_channels;
    m.sar_channels = gap.sar_channels;
    m.height = h;
    m.width = w;
    m.gen_seed = seed;
    ds.opt = TensorF({n, opt_channels, h, w});
    ds.sar = TensorF({n, gap.sar_channels, h, w});

    const auto patterns = detail::make_class_patterns(gap, seed, opt_channels);
    for (int i = 0; i < n; ++i) {
        const int label = i % gap.classes;
        SampleMeta s;
        s.id = i;
        s.label = label;
        m.samples.push_back(s);

        Rng rng(derive_seed(seed, "sample", static_cast<std::uint64_t>(i)));
        const double amplitude = rng.uniform(0.7, 1.3);
        detail::render_sample(rng, patterns.opt[static_cast<std::size_t>(label)],
                              gap.informativeness_opt, gap.noise_opt, amplitude, opt_channels, h,
                              w,
                              ds.opt.ptr() + static_cast<std::size_t>(i) * ds.opt_sample_size());
        detail::render_sample(rng, patterns.sar[static_cast<std::size_t>(label)],
                              gap.informativeness_sar, gap.noise_sar, amplitude, gap.sar_channels,
                              h, w,
                              ds.sar.ptr() + static_cast<std::size_t>(i) * ds.sar_sample_size());
    }
    return ds;
}

}  // namespace mb
