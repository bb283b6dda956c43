#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "mb/error.hpp"
#include "mb/losses.hpp"

namespace mb {

// Per-sample information contribution value: the softmax probability the
// auxiliary model assigns to its own predicted class. Bounded by [1/M, 1].
struct ContributionScore {
    double value = 0.0;
    int predicted = 0;
};

template <class T>
ContributionScore contribution_score(std::span<const T> aux_logits) {
    if (aux_logits.size() < 2) throw InvalidInputError("contribution_score: need M >= 2");
    const auto probs = softmax(aux_logits);  // validates finiteness
    const std::size_t k = argmax_lowest_tie(std::span<const T>(probs));
    return {static_cast<double>(probs[k]), static_cast<int>(k)};
}

struct RatioClamp {
    double lo = 0.2;
    double hi = 5.0;
};

// Per-batch discrepancy ratios. Pre-clamp values satisfy
// rho_opt * rho_sar = 1; each ratio is then clamped independently.
struct BatchRatios {
    double rho_opt_pre = 1.0;
    double rho_sar_pre = 1.0;
    double rho_opt = 1.0;
    double rho_sar = 1.0;
    double sum_opt = 0.0;
    double sum_sar = 0.0;
    int batch_size = 0;
};

inline BatchRatios discrepancy_ratios(std::span<const double> scores_opt,
                                      std::span<const double> scores_sar,
                                      RatioClamp clamp = {}) {
    if (scores_opt.size() != scores_sar.size())
        throw InvalidInputError("discrepancy_ratios: batch length mismatch");
    if (scores_opt.empty()) throw InvalidInputError("discrepancy_ratios: empty batch");
    if (clamp.lo <= 0.0 || clamp.hi < clamp.lo)
        throw InvalidInputError("discrepancy_ratios: bad clamp bounds");
    BatchRatios r;
    r.batch_size = static_cast<int>(scores_opt.size());
    for (std::size_t i = 0; i < scores_opt.size(); ++i) {
        const double so = scores_opt[i], ss = scores_sar[i];
        if (!(so > 0.0 && so <= 1.0) || !(ss > 0.0 && ss <= 1.0))
            throw InvalidInputError("discrepancy_ratios: score outside (0, 1]");
        r.sum_opt += so;
        r.sum_sar += ss;
    }
    r.rho_opt_pre = r.sum_sar / r.sum_opt;
    r.rho_sar_pre = r.sum_opt / r.sum_sar;
    r.rho_opt = std::clamp(r.rho_opt_pre, clamp.lo, clamp.hi);
    r.rho_sar = std::clamp(r.rho_sar_pre, clamp.lo, clamp.hi);
    return r;
}

// Weighted target loss: the per-modality distillation terms are scaled by the
// discrepancy ratios, the source term keeps weight 1. Ratios are constants
// here; no gradient flows through them.
inline double irm_weighted_loss(double loss_opt, double loss_sar, double loss_src,
                                const BatchRatios& ratios) {
    for (double l : {loss_opt, loss_sar, loss_src})
        if (!(l >= 0.0) || !std::isfinite(l))
            throw InvalidInputError("irm_weighted_loss: losses must be finite and >= 0");
    return ratios.rho_opt * loss_opt + ratios.rho_sar * loss_sar + loss_src;
}

}  // namespace mb
