#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mb/dataset.hpp"
#include "mb/error.hpp"
#include "mb/irm.hpp"
#include "mb/losses.hpp"
#include "mb/nn.hpp"
#include "mb/optim.hpp"
#include "mb/trace.hpp"

namespace mb {

// Soft teacher output for one sample. hard is the argmax (lowest index wins
// ties); confidence = soft[hard].
struct PseudoLabel {
    std::vector<float> soft;
    int hard = 0;
    float confidence = 0.0f;
};

inline std::vector<PseudoLabel> pseudo_labels_from_logits(const TensorF& logits) {
    const int b = logits.dim(0), m = logits.dim(1);
    std::vector<PseudoLabel> out(static_cast<std::size_t>(b));
    for (int i = 0; i < b; ++i) {
        std::span<const float> row(logits.ptr() + static_cast<std::size_t>(i) * m,
                                   static_cast<std::size_t>(m));
        auto& pl = out[static_cast<std::size_t>(i)];
        pl.soft = softmax(row);
        pl.hard = static_cast<int>(argmax_lowest_tie(std::span<const float>(pl.soft)));
        pl.confidence = pl.soft[static_cast<std::size_t>(pl.hard)];
    }
    return out;
}

inline std::vector<PseudoLabel> generate_pseudo_labels(const Classifier<float>& model,
                                                       const TensorF& inputs) {
    return pseudo_labels_from_logits(forward(model, inputs));
}

// Knobs shared by every training stage.
struct StageConfig {
    int epochs = 40;
    int batch_size = 64;
    SgdOptions<float> sgd{.lr = 0.01f, .momentum = 0.9f, .decay = 0.0f};
};

namespace detail {

inline std::vector<std::vector<int>> make_batches(std::vector<int>& ids, int batch_size,
                                                  Rng& shuffle_rng) {
    shuffle_rng.shuffle(ids);
    std::vector<std::vector<int>> batches;
    for (std::size_t s = 0; s < ids.size(); s += static_cast<std::size_t>(batch_size))
        batches.emplace_back(ids.begin() + static_cast<std::ptrdiff_t>(s),
                             ids.begin() + static_cast<std::ptrdiff_t>(
                                               std::min(ids.size(),
                                                        s + static_cast<std::size_t>(batch_size))));
    return batches;
}

// Mean soft-target CE over the batch; writes d(loss)/d(logits) into dlogits.
inline double batch_soft_ce(const TensorF& logits, const std::vector<PseudoLabel>& targets,
                            bool hard_labels, TensorF& dlogits) {
    const int b = logits.dim(0), m = logits.dim(1);
    double loss = 0;
    for (int i = 0; i < b; ++i) {
        std::span<const float> row(logits.ptr() + static_cast<std::size_t>(i) * m,
                                   static_cast<std::size_t>(m));
        std::vector<float> t;
        if (hard_labels) {
            t.assign(static_cast<std::size_t>(m), 0.0f);
            t[static_cast<std::size_t>(targets[static_cast<std::size_t>(i)].hard)] = 1.0f;
        } else {
            t = targets[static_cast<std::size_t>(i)].soft;
        }
        loss += cross_entropy(std::span<const float>(t), row);
        auto g = cross_entropy_grad(std::span<const float>(t), row);
        for (int k = 0; k < m; ++k)
            dlogits[static_cast<std::size_t>(i) * m + k] = g[static_cast<std::size_t>(k)] / b;
    }
    return loss / b;
}

inline void check_frozen(const Classifier<float>& m, std::uint32_t crc_before, const char* who) {
    if (params_crc(m) != crc_before)
        throw Error(std::string("frozen teacher modified during training: ") + who);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// source fine-tuning
// ---------------------------------------------------------------------------

struct FineTuneResult {
    Classifier<float> model;
    std::vector<double> epoch_losses;
};

// New M-class head on the pre-trained encoder; the encoder is frozen by
// default, in which case features are computed once and reused every epoch
// (identical math, far fewer conv passes).
inline FineTuneResult fine_tune_source(const Classifier<float>& f_pre, const Dataset& ds,
                                       const StageConfig& cfg, std::uint64_t seed,
                                       bool freeze_encoder = true) {
    const auto labeled = indices_of(ds.manifest, SplitTag::train_labeled);
    if (labeled.empty()) throw InvalidInputError("fine_tune_source: no labeled samples");
    for (int id : labeled)
        if (ds.manifest.samples[static_cast<std::size_t>(id)].label < 0)
            throw InvalidInputError("fine_tune_source: labeled sample without label");
    const int m_classes = ds.manifest.num_classes();

    FineTuneResult res;
    res.model = f_pre;
    res.model.role = Role::source;
    res.model.num_classes = m_classes;
    const int f = res.model.feature_dim();
    {
        Rng rng(derive_seed(seed, "finetune-head-init"));
        Tensor<float> hw({m_classes, f});
        const double bound = 1.0 / std::sqrt(static_cast<double>(f));
        for (auto& v : hw.data) v = static_cast<float>(rng.uniform(-bound, bound));
        res.model.params[res.model.head_weight_index()] = std::move(hw);
        res.model.params[res.model.head_weight_index() + 1] =
            Tensor<float>({m_classes});
    }

    auto& model = res.model;
    std::vector<std::uint8_t> trainable(model.params.size(), freeze_encoder ? 0 : 1);
    trainable[model.head_weight_index()] = 1;
    trainable[model.head_weight_index() + 1] = 1;

    const std::uint32_t encoder_crc = [&] {
        std::uint32_t c = 0;
        for (std::size_t i = 0; i < model.head_weight_index(); ++i)
            c = crc32(model.params[i].data.data(), model.params[i].data.size() * sizeof(float), c);
        return c;
    }();

    // one-hot targets as pseudo labels so the shared batch loss applies
    std::vector<PseudoLabel> targets(labeled.size());
    for (std::size_t i = 0; i < labeled.size(); ++i)
        targets[i].hard = ds.manifest.samples[static_cast<std::size_t>(labeled[i])].label;

    TensorF feats;  // (N_labeled, F), frozen-encoder path only
    if (freeze_encoder) feats = forward_features(model, gather_optical(ds, labeled));

    Sgd<float> opt(cfg.sgd);
    Rng shuffle_rng(derive_seed(seed, "finetune-shuffle"));
    std::vector<int> order(labeled.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0;
        int batches = 0;
        for (auto& batch : detail::make_batches(order, cfg.batch_size, shuffle_rng)) {
            const int b = static_cast<int>(batch.size());
            std::vector<PseudoLabel> batch_targets;
            for (int local : batch) batch_targets.push_back(targets[static_cast<std::size_t>(local)]);
            TensorF dlogits({b, m_classes});
            auto grads = make_grads(model);
            double loss;
            if (freeze_encoder) {
                TensorF fb({b, f});
                for (int i = 0; i < b; ++i)
                    std::copy_n(
                        feats.ptr() + static_cast<std::size_t>(batch[static_cast<std::size_t>(i)]) * f,
                        static_cast<std::size_t>(f), fb.ptr() + static_cast<std::size_t>(i) * f);
                auto logits = head_forward(model, fb);
                loss = detail::batch_soft_ce(logits, batch_targets, /*hard_labels=*/true, dlogits);
                head_backward(model, fb, dlogits, grads);
            } else {
                std::vector<int> ids;
                for (int local : batch) ids.push_back(labeled[static_cast<std::size_t>(local)]);
                auto cache = forward_cached(model, gather_optical(ds, ids));
                loss = detail::batch_soft_ce(cache.logits, batch_targets, /*hard_labels=*/true,
                                             dlogits);
                backward(model, cache, dlogits, grads);
            }
            if (!std::isfinite(loss)) throw DivergenceError("fine_tune_source: non-finite loss");
            opt.apply(model.params, grads, &trainable);
            epoch_loss += loss;
            ++batches;
        }
        res.epoch_losses.push_back(batches ? epoch_loss / batches : 0.0);
    }

    if (freeze_encoder) {
        std::uint32_t c = 0;
        for (std::size_t i = 0; i < model.head_weight_index(); ++i)
            c = crc32(model.params[i].data.data(), model.params[i].data.size() * sizeof(float), c);
        if (c != encoder_crc) throw Error("fine_tune_source: frozen encoder changed");
    }
    return res;
}

// ---------------------------------------------------------------------------
// transfer sub-task F1: source -> per-modality auxiliaries
// ---------------------------------------------------------------------------

struct F1Options {
    bool hard_labels = false;
    bool warm_start = false;  // copy the source encoder into the optical auxiliary
};

struct F1Result {
    Classifier<float> aux_opt;
    Classifier<float> aux_sar;
    std::vector<double> epoch_loss_opt;
    std::vector<double> epoch_loss_sar;
};

// Both auxiliaries learn from the frozen source model's pseudo-labels on the
// paired optical image; the SAR auxiliary sees only SAR tensors. Pseudo-labels
// are recomputed per batch, never cached.
inline F1Result train_auxiliaries_F1(const Classifier<float>& f_s, const Dataset& ds,
                                     const StageConfig& cfg, std::uint64_t seed,
                                     F1Options opts = {}) {
    auto pool = indices_of(ds.manifest, SplitTag::train_unlabeled);
    if (pool.empty()) throw InvalidInputError("train_auxiliaries_F1: empty unlabeled pool");
    const std::uint32_t src_crc = params_crc(f_s);
    const int m_classes = f_s.num_classes;

    F1Result res;
    res.aux_opt = make_classifier<float>(f_s.arch, ds.manifest.opt_channels, m_classes,
                                         Role::aux_opt, derive_seed(seed, "init-aux-opt"));
    res.aux_sar = make_classifier<float>(f_s.arch, ds.manifest.sar_channels, m_classes,
                                         Role::aux_sar, derive_seed(seed, "init-aux-sar"));
    if (opts.warm_start) {
        if (ds.manifest.opt_channels != f_s.in_channels)
            throw ConfigError("train_auxiliaries_F1: warm start needs matching channels");
        for (std::size_t i = 0; i < f_s.head_weight_index(); ++i)
            res.aux_opt.params[i] = f_s.params[i];
    }

    Sgd<float> opt_o(cfg.sgd), opt_s(cfg.sgd);
    Rng shuffle_rng(derive_seed(seed, "f1-shuffle"));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double el_o = 0, el_s = 0;
        int batches = 0;
        for (const auto& ids : detail::make_batches(pool, cfg.batch_size, shuffle_rng)) {
            const int b = static_cast<int>(ids.size());
            const auto x_opt = gather_optical(ds, ids);
            const auto x_sar = gather_sar(ds, ids);
            const auto teacher = pseudo_labels_from_logits(forward(f_s, x_opt));

            auto cache_o = forward_cached(res.aux_opt, x_opt);
            TensorF dlo({b, m_classes});
            const double lo = detail::batch_soft_ce(cache_o.logits, teacher, opts.hard_labels, dlo);
            auto grads_o = make_grads(res.aux_opt);
            backward(res.aux_opt, cache_o, dlo, grads_o);

            auto cache_s = forward_cached(res.aux_sar, x_sar);
            TensorF dls({b, m_classes});
            const double ls = detail::batch_soft_ce(cache_s.logits, teacher, opts.hard_labels, dls);
            auto grads_s = make_grads(res.aux_sar);
            backward(res.aux_sar, cache_s, dls, grads_s);

            if (!std::isfinite(lo) || !std::isfinite(ls))
                throw DivergenceError("train_auxiliaries_F1: non-finite loss");
            opt_o.apply(res.aux_opt.params, grads_o);
            opt_s.apply(res.aux_sar.params, grads_s);
            el_o += lo;
            el_s += ls;
            ++batches;
        }
        res.epoch_loss_opt.push_back(batches ? el_o / batches : 0.0);
        res.epoch_loss_sar.push_back(batches ? el_s / batches : 0.0);
    }
    detail::check_frozen(f_s, src_crc, "source in F1");
    return res;
}

// ---------------------------------------------------------------------------
// transfer sub-task F2: source + auxiliaries -> fused target
// ---------------------------------------------------------------------------

struct TeacherSet {
    const Classifier<float>* source = nullptr;
    const Classifier<float>* aux_opt = nullptr;
    const Classifier<float>* aux_sar = nullptr;
};

struct F2Options {
    bool irm_enabled = true;
    RatioClamp clamp;
    bool hard_labels = false;
};

// Per-batch loss decomposition; with regulation off the applied rho are 1.
struct F2LossBreakdown {
    double loss_opt = 0.0;
    double loss_sar = 0.0;
    double loss_src = 0.0;
    double rho_opt = 1.0;
    double rho_sar = 1.0;
    double total = 0.0;
};

struct F2Result {
    Classifier<float> target;
    LossTrace trace;
};

inline F2Result train_target_F2(const TeacherSet& teachers, const Dataset& ds,
                                const StageConfig& cfg, std::uint64_t seed, F2Options opts = {}) {
    if (!teachers.source || !teachers.aux_opt || !teachers.aux_sar)
        throw ConfigError("train_target_F2: incomplete teacher set");
    const int m_classes = teachers.source->num_classes;
    if (teachers.aux_opt->num_classes != m_classes || teachers.aux_sar->num_classes != m_classes)
        throw ConfigError("train_target_F2: teacher class-count mismatch");
    auto pool = indices_of(ds.manifest, SplitTag::train_unlabeled);
    if (pool.empty()) throw InvalidInputError("train_target_F2: empty unlabeled pool");

    const std::uint32_t crc_src = params_crc(*teachers.source);
    const std::uint32_t crc_o = params_crc(*teachers.aux_opt);
    const std::uint32_t crc_s = params_crc(*teachers.aux_sar);

    F2Result res;
    const int fused_channels = ds.manifest.opt_channels + ds.manifest.sar_channels;
    res.target = make_classifier<float>(teachers.source->arch, fused_channels, m_classes,
                                        Role::target, derive_seed(seed, "init-target"));

    Sgd<float> opt(cfg.sgd);
    Rng shuffle_rng(derive_seed(seed, "f2-shuffle"));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        int batch_index = 0;
        for (const auto& ids : detail::make_batches(pool, cfg.batch_size, shuffle_rng)) {
            const int b = static_cast<int>(ids.size());
            const auto x_opt = gather_optical(ds, ids);
            const auto x_sar = gather_sar(ds, ids);
            const auto x_fused = gather_fused(ds, ids);

            const auto pl_opt = pseudo_labels_from_logits(forward(*teachers.aux_opt, x_opt));
            const auto pl_sar = pseudo_labels_from_logits(forward(*teachers.aux_sar, x_sar));
            const auto pl_src = pseudo_labels_from_logits(forward(*teachers.source, x_opt));

            // contribution values are the auxiliary confidences
            std::vector<double> s_opt(static_cast<std::size_t>(b)), s_sar(static_cast<std::size_t>(b));
            for (int i = 0; i < b; ++i) {
                s_opt[static_cast<std::size_t>(i)] = pl_opt[static_cast<std::size_t>(i)].confidence;
                s_sar[static_cast<std::size_t>(i)] = pl_sar[static_cast<std::size_t>(i)].confidence;
            }
            const auto raw = discrepancy_ratios(s_opt, s_sar, opts.clamp);
            BatchRatios applied = raw;
            if (!opts.irm_enabled) {
                applied.rho_opt = 1.0;
                applied.rho_sar = 1.0;
            }

            auto cache = forward_cached(res.target, x_fused);
            TensorF d_opt({b, m_classes}), d_sar({b, m_classes}), d_src({b, m_classes});
            const double lo = detail::batch_soft_ce(cache.logits, pl_opt, opts.hard_labels, d_opt);
            const double ls = detail::batch_soft_ce(cache.logits, pl_sar, opts.hard_labels, d_sar);
            const double lc = detail::batch_soft_ce(cache.logits, pl_src, opts.hard_labels, d_src);
            F2LossBreakdown breakdown{lo, ls, lc, applied.rho_opt, applied.rho_sar,
                                      irm_weighted_loss(lo, ls, lc, applied)};
            if (!std::isfinite(breakdown.total))
                throw DivergenceError("train_target_F2: non-finite loss");

            // rho are constants in the gradient
            TensorF dlogits({b, m_classes});
            for (std::size_t j = 0; j < dlogits.numel(); ++j)
                dlogits[j] = static_cast<float>(applied.rho_opt) * d_opt[j] +
                             static_cast<float>(applied.rho_sar) * d_sar[j] + d_src[j];
            auto grads = make_grads(res.target);
            backward(res.target, cache, dlogits, grads);
            opt.apply(res.target.params, grads);

            res.trace.rows.push_back({epoch, batch_index, breakdown.loss_opt, breakdown.loss_sar,
                                      breakdown.loss_src, raw.rho_opt_pre, applied.rho_opt,
                                      raw.rho_sar_pre, applied.rho_sar});
            ++batch_index;
        }
    }
    detail::check_frozen(*teachers.source, crc_src, "source in F2");
    detail::check_frozen(*teachers.aux_opt, crc_o, "optical auxiliary in F2");
    detail::check_frozen(*teachers.aux_sar, crc_s, "SAR auxiliary in F2");
    return res;
}

}  // namespace mb
