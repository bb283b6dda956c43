#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "mb/error.hpp"

namespace mb {

// Dense row-major tensor. Shapes are small, data is flat; layout for image
// batches is (N, C, H, W).
template <class T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(numel_of(shape), T(0)) {}
    Tensor(std::initializer_list<int> s) : Tensor(std::vector<int>(s)) {}

    static std::size_t numel_of(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int d : s) {
            if (d < 0) throw ShapeError("negative tensor dimension");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    std::size_t numel() const { return data.size(); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out(shape);
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace mb
