#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mb/optim.hpp"
#include "mb/tensor.hpp"

using Catch::Approx;

TEST_CASE("learning rate zero leaves params bit-identical") {
    mb::Tensor<float> p({4});
    p.data = {1.0f, -2.5f, 3.25f, 0.125f};
    const auto before = p.data;
    std::vector<mb::Tensor<float>> params{p}, grads{mb::Tensor<float>({4})};
    grads[0].data = {10.0f, -3.0f, 0.5f, 1.0f};
    mb::Sgd<float> opt({.lr = 0.0f, .momentum = 0.9f});
    opt.apply(params, grads);
    opt.apply(params, grads);
    REQUIRE(params[0].data == before);
}

TEST_CASE("plain SGD with lr=1 and g=p zeroes params") {
    std::vector<mb::Tensor<float>> params{mb::Tensor<float>({3})};
    params[0].data = {0.5f, -4.0f, 7.0f};
    std::vector<mb::Tensor<float>> grads{params[0]};
    mb::Sgd<float> opt({.lr = 1.0f});
    opt.apply(params, grads);
    for (float v : params[0].data) REQUIRE(v == 0.0f);
}

TEST_CASE("quadratic bowl converges at the closed-form rate") {
    // f(p) = p^2/2, grad = p; p_k = 0.9^k for lr 0.1
    std::vector<mb::Tensor<double>> params{mb::Tensor<double>({1})};
    params[0][0] = 1.0;
    mb::Sgd<double> opt({.lr = 0.1});
    for (int k = 0; k < 100; ++k) {
        std::vector<mb::Tensor<double>> grads{params[0]};
        opt.apply(params, grads);
    }
    REQUIRE(params[0][0] == Approx(std::pow(0.9, 100)).epsilon(1e-12));
    REQUIRE(params[0][0] == Approx(2.656139889e-5).epsilon(1e-9));
}

TEST_CASE("non-finite gradient aborts with diagnostics") {
    std::vector<mb::Tensor<float>> params{mb::Tensor<float>({2})};
    std::vector<mb::Tensor<float>> grads{mb::Tensor<float>({2})};
    grads[0].data = {1.0f, std::numeric_limits<float>::quiet_NaN()};
    mb::Sgd<float> opt({.lr = 0.1f});
    REQUIRE_THROWS_AS(opt.apply(params, grads), mb::DivergenceError);
}

TEST_CASE("frozen tensors stay bit-identical under the mask") {
    std::vector<mb::Tensor<float>> params{mb::Tensor<float>({2}), mb::Tensor<float>({2})};
    params[0].data = {1.0f, 2.0f};
    params[1].data = {3.0f, 4.0f};
    std::vector<mb::Tensor<float>> grads{params[0], params[1]};
    std::vector<std::uint8_t> trainable{0, 1};
    mb::Sgd<float> opt({.lr = 0.5f});
    opt.apply(params, grads, &trainable);
    REQUIRE(params[0].data == std::vector<float>{1.0f, 2.0f});
    REQUIRE(params[1].data == std::vector<float>{1.5f, 2.0f});
}

TEST_CASE("inverse-time decay shrinks the effective step") {
    std::vector<mb::Tensor<double>> params{mb::Tensor<double>({1})};
    params[0][0] = 0.0;
    std::vector<mb::Tensor<double>> grads{mb::Tensor<double>({1})};
    grads[0][0] = 1.0;
    mb::Sgd<double> opt({.lr = 1.0, .decay = 1.0});
    opt.apply(params, grads);  // step 0: eff lr 1
    REQUIRE(params[0][0] == Approx(-1.0));
    opt.apply(params, grads);  // step 1: eff lr 1/2
    REQUIRE(params[0][0] == Approx(-1.5));
    opt.apply(params, grads);  // step 2: eff lr 1/3
    REQUIRE(params[0][0] == Approx(-1.5 - 1.0 / 3.0));
}

TEST_CASE("momentum accumulates velocity") {
    std::vector<mb::Tensor<double>> params{mb::Tensor<double>({1})};
    std::vector<mb::Tensor<double>> grads{mb::Tensor<double>({1})};
    grads[0][0] = 1.0;
    mb::Sgd<double> opt({.lr = 0.1, .momentum = 0.5});
    opt.apply(params, grads);  // v = 1, p = -0.1
    REQUIRE(params[0][0] == Approx(-0.1));
    opt.apply(params, grads);  // v = 1.5, p = -0.25
    REQUIRE(params[0][0] == Approx(-0.25));
}
