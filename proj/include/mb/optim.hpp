#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mb/error.hpp"
#include "mb/tensor.hpp"

namespace mb {

// SGD with optional momentum and inverse-time decay:
//   eff_lr(step) = lr / (1 + decay * step)
//   v <- momentum * v + g ;  p <- p - eff_lr * v
template <class T>
struct SgdOptions {
    T lr = T(1e-3);
    T momentum = T(0);
    T decay = T(0);
};

template <class T>
class Sgd {
public:
    explicit Sgd(SgdOptions<T> opts) : opts_(opts) {}

    const SgdOptions<T>& options() const { return opts_; }
    long step_count() const { return step_; }

    // trainable: optional per-tensor mask; frozen tensors are left bit-identical.
    void apply(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads,
               const std::vector<std::uint8_t>* trainable = nullptr) {
        if (params.size() != grads.size()) throw ShapeError("sgd: params/grads size mismatch");
        if (velocity_.empty() && opts_.momentum != T(0)) {
            velocity_.reserve(params.size());
            for (const auto& p : params) velocity_.emplace_back(p.shape);
        }
        const T eff_lr = opts_.lr / (T(1) + opts_.decay * static_cast<T>(step_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (trainable && !(*trainable)[i]) continue;
            if (!params[i].same_shape(grads[i])) throw ShapeError("sgd: grad shape mismatch");
            auto& p = params[i];
            const auto& g = grads[i];
            for (std::size_t j = 0; j < p.numel(); ++j) {
                if (!std::isfinite(static_cast<double>(g[j])))
                    throw DivergenceError("sgd: non-finite gradient at param " + std::to_string(i) +
                                          "[" + std::to_string(j) + "], step " +
                                          std::to_string(step_));
                if (opts_.momentum != T(0)) {
                    auto& v = velocity_[i][j];
                    v = opts_.momentum * v + g[j];
                    p[j] -= eff_lr * v;
                } else {
                    p[j] -= eff_lr * g[j];
                }
            }
        }
        ++step_;
    }

private:
    SgdOptions<T> opts_;
    long step_ = 0;
    std::vector<Tensor<T>> velocity_;
};

}  // namespace mb
