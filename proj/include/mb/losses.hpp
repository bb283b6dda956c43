#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "mb/error.hpp"

namespace mb {

template <class T>
bool all_finite(std::span<const T> v) {
    for (T x : v)
        if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
}

// Max-shifted softmax; stable for arbitrarily large logits.
template <class T>
std::vector<T> softmax(std::span<const T> logits) {
    if (logits.empty()) throw InvalidInputError("softmax: empty logits");
    if (!all_finite(logits)) throw InvalidInputError("softmax: non-finite logit");
    const T m = *std::max_element(logits.begin(), logits.end());
    std::vector<T> out(logits.size());
    T sum = 0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        out[k] = std::exp(logits[k] - m);
        sum += out[k];
    }
    for (auto& p : out) p /= sum;
    return out;
}

template <class T>
std::vector<T> softmax(const std::vector<T>& logits) {
    return softmax(std::span<const T>(logits));
}

template <class T>
std::vector<T> log_softmax(std::span<const T> logits) {
    if (logits.empty()) throw InvalidInputError("log_softmax: empty logits");
    if (!all_finite(logits)) throw InvalidInputError("log_softmax: non-finite logit");
    const T m = *std::max_element(logits.begin(), logits.end());
    T sum = 0;
    for (T z : logits) sum += std::exp(z - m);
    const T lse = m + std::log(sum);
    std::vector<T> out(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) out[k] = logits[k] - lse;
    return out;
}

template <class T>
void check_distribution(std::span<const T> target, const char* where) {
    T sum = 0;
    for (T t : target) {
        if (!std::isfinite(static_cast<double>(t)) || t < T(0))
            throw InvalidInputError(std::string(where) + ": target is not a distribution");
        sum += t;
    }
    if (std::abs(static_cast<double>(sum) - 1.0) > 1e-6)
        throw InvalidInputError(std::string(where) + ": target does not sum to 1");
}

// -sum_k target_k * log softmax(logits)_k
template <class T>
T cross_entropy(std::span<const T> target, std::span<const T> logits) {
    if (target.size() != logits.size()) throw ShapeError("cross_entropy: size mismatch");
    check_distribution(target, "cross_entropy");
    const auto lsm = log_softmax(logits);
    T loss = 0;
    for (std::size_t k = 0; k < target.size(); ++k) loss -= target[k] * lsm[k];
    return std::max(loss, T(0));
}

template <class T>
T cross_entropy(const std::vector<T>& target, const std::vector<T>& logits) {
    return cross_entropy(std::span<const T>(target), std::span<const T>(logits));
}

// d cross_entropy / d logits = softmax(logits) - target
template <class T>
std::vector<T> cross_entropy_grad(std::span<const T> target, std::span<const T> logits) {
    auto g = softmax(logits);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] -= target[k];
    return g;
}

template <class T>
T entropy(std::span<const T> dist) {
    T h = 0;
    for (T p : dist)
        if (p > T(0)) h -= p * std::log(p);
    return h;
}

template <class T>
std::size_t argmax_lowest_tie(std::span<const T> v) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < v.size(); ++k)
        if (v[k] > v[best]) best = k;
    return best;
}

}  // namespace mb
