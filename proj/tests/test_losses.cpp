#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "mb/losses.hpp"
#include "mb/rng.hpp"

using Catch::Approx;

TEST_CASE("softmax basic values") {
    auto p = mb::softmax(std::vector<double>{0.0, 0.0});
    REQUIRE(p[0] == Approx(0.5).margin(1e-12));
    REQUIRE(p[1] == Approx(0.5).margin(1e-12));

    auto q = mb::softmax(std::vector<double>{0.0, std::log(3.0)});
    REQUIRE(q[0] == Approx(0.25).margin(1e-12));
    REQUIRE(q[1] == Approx(0.75).margin(1e-12));
}

TEST_CASE("softmax is stable under large logits") {
    auto p = mb::softmax(std::vector<double>{1000.0, 1000.0, 1000.0});
    for (double v : p) {
        REQUIRE(std::isfinite(v));
        REQUIRE(v == Approx(1.0 / 3.0).margin(1e-12));
    }
    auto f = mb::softmax(std::vector<float>{88.0f, 88.0f});
    REQUIRE(f[0] == Approx(0.5f).margin(1e-6));
}

TEST_CASE("softmax rejects non-finite input") {
    REQUIRE_THROWS_AS(mb::softmax(std::vector<double>{1.0, std::nan("")}), mb::InvalidInputError);
    REQUIRE_THROWS_AS(
        mb::softmax(std::vector<double>{std::numeric_limits<double>::infinity(), 0.0}),
        mb::InvalidInputError);
    REQUIRE_THROWS_AS(mb::softmax(std::vector<double>{}), mb::InvalidInputError);
}

TEST_CASE("softmax sums to one and is shift invariant") {
    mb::Rng rng(42);
    for (int it = 0; it < 200; ++it) {
        const int m = 1 + static_cast<int>(rng.next_below(10));
        std::vector<double> z(static_cast<std::size_t>(m));
        for (auto& v : z) v = rng.uniform(-30.0, 30.0);
        auto p = mb::softmax(z);
        double sum = 0;
        for (double v : p) {
            REQUIRE(v > 0.0);
            sum += v;
        }
        REQUIRE(sum == Approx(1.0).margin(1e-9));

        const double c = rng.uniform(-100.0, 100.0);
        auto zs = z;
        for (auto& v : zs) v += c;
        auto ps = mb::softmax(zs);
        for (std::size_t k = 0; k < p.size(); ++k)
            REQUIRE(ps[k] == Approx(p[k]).margin(1e-9));
    }
}

TEST_CASE("cross entropy basic values") {
    // near one-hot identity: large margin drives loss to ~0
    std::vector<double> onehot{1.0, 0.0, 0.0};
    REQUIRE(mb::cross_entropy(onehot, std::vector<double>{30.0, 0.0, 0.0}) <= 1e-6);

    std::vector<double> half{0.5, 0.5};
    REQUIRE(mb::cross_entropy(half, std::vector<double>{0.0, 0.0}) ==
            Approx(std::log(2.0)).margin(1e-12));

    // when softmax(logits) equals the target, CE equals the target entropy
    std::vector<double> t{0.25, 0.75};
    const double expected = -(0.25 * std::log(0.25) + 0.75 * std::log(0.75));
    REQUIRE(expected == Approx(0.562335).margin(1e-6));
    REQUIRE(mb::cross_entropy(t, std::vector<double>{0.0, std::log(3.0)}) ==
            Approx(expected).margin(1e-12));
}

TEST_CASE("cross entropy rejects invalid targets") {
    REQUIRE_THROWS_AS(mb::cross_entropy(std::vector<double>{0.5, 0.6}, std::vector<double>{0, 0}),
                      mb::InvalidInputError);
    REQUIRE_THROWS_AS(mb::cross_entropy(std::vector<double>{-0.1, 1.1}, std::vector<double>{0, 0}),
                      mb::InvalidInputError);
}

TEST_CASE("Gibbs inequality: CE >= entropy, equality iff match") {
    mb::Rng rng(7);
    for (int it = 0; it < 500; ++it) {
        const int m = 2 + static_cast<int>(rng.next_below(8));
        std::vector<double> z(static_cast<std::size_t>(m)), w(static_cast<std::size_t>(m));
        for (auto& v : z) v = rng.uniform(-5.0, 5.0);
        for (auto& v : w) v = rng.uniform(-5.0, 5.0);
        auto t = mb::softmax(w);
        const double ce = mb::cross_entropy(std::span<const double>(t), std::span<const double>(z));
        const double h = mb::entropy(std::span<const double>(t));
        REQUIRE(ce >= h - 1e-9);
        // equality case: logits matching the target distribution
        std::vector<double> zt(t.size());
        for (std::size_t k = 0; k < t.size(); ++k) zt[k] = std::log(t[k]);
        REQUIRE(mb::cross_entropy(std::span<const double>(t), std::span<const double>(zt)) ==
                Approx(h).margin(1e-9));
    }
}

TEST_CASE("cross entropy gradient is softmax minus target") {
    mb::Rng rng(3);
    std::vector<double> z{0.3, -1.2, 2.0};
    std::vector<double> t{0.2, 0.5, 0.3};
    auto g = mb::cross_entropy_grad(std::span<const double>(t), std::span<const double>(z));
    auto p = mb::softmax(z);
    for (int k = 0; k < 3; ++k)
        REQUIRE(g[static_cast<std::size_t>(k)] ==
                Approx(p[static_cast<std::size_t>(k)] - t[static_cast<std::size_t>(k)])
                    .margin(1e-12));
    // numeric check of the gradient
    const double eps = 1e-6;
    for (std::size_t k = 0; k < z.size(); ++k) {
        auto zp = z, zm = z;
        zp[k] += eps;
        zm[k] -= eps;
        const double num = (mb::cross_entropy(t, zp) - mb::cross_entropy(t, zm)) / (2 * eps);
        REQUIRE(g[k] == Approx(num).margin(1e-8));
    }
}

TEST_CASE("argmax breaks ties by lowest index") {
    std::vector<double> v{1.0, 3.0, 3.0, 2.0};
    REQUIRE(mb::argmax_lowest_tie(std::span<const double>(v)) == 1);
}
