#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "mb/checkpoint.hpp"
#include "mb/gradcheck.hpp"
#include "mb/losses.hpp"
#include "mb/nn.hpp"
#include "mb/rng.hpp"

using Catch::Approx;

namespace {

mb::Tensor<double> random_batch(int b, int c, int h, int w, mb::Rng& rng) {
    mb::Tensor<double> x({b, c, h, w});
    for (auto& v : x.data) v = rng.uniform(-1.0, 1.0);
    return x;
}

// Mean soft-target cross entropy over the batch, plus its analytic gradients.
double batch_ce_loss(const mb::Classifier<double>& m, const mb::Tensor<double>& x,
                     const std::vector<std::vector<double>>& targets,
                     std::vector<mb::Tensor<double>>* grads = nullptr) {
    const auto cache = mb::forward_cached(m, x);
    const int B = x.dim(0), M = m.num_classes;
    double loss = 0;
    mb::Tensor<double> dlogits({B, M});
    for (int n = 0; n < B; ++n) {
        std::span<const double> row(cache.logits.ptr() + static_cast<std::size_t>(n) * M,
                                    static_cast<std::size_t>(M));
        loss += mb::cross_entropy(std::span<const double>(targets[static_cast<std::size_t>(n)]),
                                  row);
        auto g = mb::cross_entropy_grad(
            std::span<const double>(targets[static_cast<std::size_t>(n)]), row);
        for (int k = 0; k < M; ++k)
            dlogits[static_cast<std::size_t>(n) * M + k] = g[static_cast<std::size_t>(k)] / B;
    }
    loss /= B;
    if (grads) {
        *grads = mb::make_grads(m);
        mb::backward(m, cache, dlogits, *grads);
    }
    return loss;
}

}  // namespace

TEST_CASE("param_count matches allocated parameters") {
    const mb::Arch arch = mb::default_arch();
    auto m = mb::make_classifier<float>(arch, 3, 4, mb::Role::source, 1);
    std::size_t total = 0;
    for (const auto& p : m.params) total += p.numel();
    REQUIRE(total == mb::param_count(arch, 3, 4));
    REQUIRE(mb::param_count(arch, 6, 4) > mb::param_count(arch, 3, 4));
}

TEST_CASE("forward yields (B, M) logits for varying spatial sizes") {
    auto m = mb::make_classifier<float>(mb::default_arch(), 3, 5, mb::Role::source, 9);
    mb::Rng rng(11);
    for (int hw : {8, 16, 17, 31}) {
        mb::Tensor<float> x({2, 3, hw, hw});
        for (auto& v : x.data) v = rng.next_float();
        auto logits = mb::forward(m, x);
        REQUIRE(logits.shape == std::vector<int>{2, 5});
    }
}

TEST_CASE("zero-initialized head gives uniform softmax") {
    auto m = mb::make_classifier<float>(mb::default_arch(), 3, 4, mb::Role::source, 3);
    m.params[m.head_weight_index()].fill(0.0f);
    m.params[m.head_weight_index() + 1].fill(0.0f);
    mb::Rng rng(5);
    mb::Tensor<float> x({3, 3, 16, 16});
    for (auto& v : x.data) v = rng.next_float();
    auto logits = mb::forward(m, x);
    for (int n = 0; n < 3; ++n) {
        std::span<const float> row(logits.ptr() + static_cast<std::size_t>(n) * 4, 4);
        auto p = mb::softmax(row);
        for (float v : p) REQUIRE(v == Approx(0.25f).margin(1e-6));
    }
}

TEST_CASE("identical inputs give identical logit rows") {
    auto m = mb::make_classifier<float>(mb::default_arch(), 3, 4, mb::Role::source, 3);
    mb::Rng rng(17);
    mb::Tensor<float> one({1, 3, 16, 16});
    for (auto& v : one.data) v = rng.next_float();
    mb::Tensor<float> batch({4, 3, 16, 16});
    for (int n = 0; n < 4; ++n)
        std::copy(one.data.begin(), one.data.end(),
                  batch.data.begin() + static_cast<std::ptrdiff_t>(n * one.numel()));
    auto logits = mb::forward(m, batch);
    for (int n = 1; n < 4; ++n)
        for (int k = 0; k < 4; ++k)
            REQUIRE(logits[static_cast<std::size_t>(n * 4 + k)] ==
                    logits[static_cast<std::size_t>(k)]);
}

TEST_CASE("fixed seed reproduces init and logits bit-exactly") {
    auto a = mb::make_classifier<float>(mb::default_arch(), 3, 4, mb::Role::source, 77);
    auto b = mb::make_classifier<float>(mb::default_arch(), 3, 4, mb::Role::source, 77);
    REQUIRE(mb::params_crc(a) == mb::params_crc(b));
    mb::Rng rng(1);
    mb::Tensor<float> x({2, 3, 16, 16});
    for (auto& v : x.data) v = rng.next_float();
    auto la = mb::forward(a, x);
    auto lb = mb::forward(b, x);
    REQUIRE(la.data == lb.data);
}

TEST_CASE("channel mismatch raises a shape error") {
    auto m = mb::make_classifier<float>(mb::default_arch(), 3, 4, mb::Role::aux_sar, 3);
    mb::Tensor<float> x({1, 2, 16, 16});
    REQUIRE_THROWS_AS(mb::forward(m, x), mb::ShapeError);
}

TEST_CASE("backward matches finite differences on random instances") {
    mb::Rng rng(123);
    for (int inst = 0; inst < 5; ++inst) {
        mb::Arch arch{{{4, 3, 2}, {6, 3, 2}}};
        auto m = mb::make_classifier<double>(arch, 2, 3, mb::Role::target,
                                             1000 + static_cast<std::uint64_t>(inst));
        auto x = random_batch(3, 2, 9, 9, rng);
        std::vector<std::vector<double>> targets;
        for (int n = 0; n < 3; ++n) {
            std::vector<double> w(3);
            for (auto& v : w) v = rng.uniform(-2.0, 2.0);
            targets.push_back(mb::softmax(w));
        }
        std::vector<mb::Tensor<double>> analytic;
        batch_ce_loss(m, x, targets, &analytic);
        auto res = mb::finite_difference_gradcheck(
            [&] { return batch_ce_loss(m, x, targets); }, m.params, analytic, 1e-5);
        INFO("instance " << inst << " max rel err " << res.max_rel_err);
        REQUIRE(res.max_rel_err < 1e-4);
    }
}

TEST_CASE("gradcheck is near-exact for a linear loss") {
    std::vector<mb::Tensor<double>> params;
    params.emplace_back(std::vector<int>{5});
    mb::Rng rng(4);
    std::vector<double> w(5);
    for (auto& v : w) v = rng.uniform(-1.0, 1.0);
    for (auto& v : params[0].data) v = rng.uniform(-1.0, 1.0);
    std::vector<mb::Tensor<double>> analytic;
    analytic.emplace_back(std::vector<int>{5});
    for (int i = 0; i < 5; ++i) analytic[0][static_cast<std::size_t>(i)] = w[static_cast<std::size_t>(i)];
    auto loss = [&] {
        double s = 0;
        for (int i = 0; i < 5; ++i)
            s += w[static_cast<std::size_t>(i)] * params[0][static_cast<std::size_t>(i)];
        return s;
    };
    auto res = mb::finite_difference_gradcheck(loss, params, analytic, 1e-5);
    REQUIRE(res.max_rel_err <= 1e-9);
}

TEST_CASE("gradcheck flags cross entropy of a toy two-class model") {
    // logits = W x for a single sample; loss = CE(target, logits)
    mb::Rng rng(9);
    std::vector<double> x{0.7, -0.3, 0.5};
    std::vector<double> t{0.35, 0.65};
    std::vector<mb::Tensor<double>> params;
    params.emplace_back(std::vector<int>{2, 3});
    for (auto& v : params[0].data) v = rng.uniform(-1.0, 1.0);
    auto logits_of = [&] {
        std::vector<double> z(2, 0.0);
        for (int k = 0; k < 2; ++k)
            for (int j = 0; j < 3; ++j)
                z[static_cast<std::size_t>(k)] +=
                    params[0][static_cast<std::size_t>(k * 3 + j)] * x[static_cast<std::size_t>(j)];
        return z;
    };
    auto loss = [&] { return mb::cross_entropy(t, logits_of()); };
    std::vector<mb::Tensor<double>> analytic;
    analytic.emplace_back(std::vector<int>{2, 3});
    auto g = mb::cross_entropy_grad(std::span<const double>(t),
                                    std::span<const double>(logits_of()));
    for (int k = 0; k < 2; ++k)
        for (int j = 0; j < 3; ++j)
            analytic[0][static_cast<std::size_t>(k * 3 + j)] =
                g[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(j)];
    auto res = mb::finite_difference_gradcheck(loss, params, analytic, 1e-5);
    REQUIRE(res.max_rel_err < 1e-4);
}

TEST_CASE("checkpoint round trip preserves everything") {
    auto m = mb::make_classifier<float>(mb::default_arch(), 6, 4, mb::Role::target, 55);
    const auto path = std::filesystem::temp_directory_path() / "mb_test_ck.bin";
    mb::save_checkpoint(path, m, 0xabcdef12345ULL);
    auto ck = mb::load_checkpoint(path);
    REQUIRE(ck.rng_state == 0xabcdef12345ULL);
    REQUIRE(ck.model.arch == m.arch);
    REQUIRE(ck.model.in_channels == 6);
    REQUIRE(ck.model.role == mb::Role::target);
    REQUIRE(mb::params_crc(ck.model) == mb::params_crc(m));
    std::filesystem::remove(path);
}

TEST_CASE("corrupted checkpoint fails its checksum") {
    auto m = mb::make_classifier<float>(mb::default_arch(), 3, 4, mb::Role::source, 55);
    const auto path = std::filesystem::temp_directory_path() / "mb_test_ck2.bin";
    mb::save_checkpoint(path, m, 1);
    auto bytes = mb::read_file_bytes(path);
    bytes[bytes.size() / 2] ^= 0x40;
    mb::write_file_bytes(path, bytes.data(), bytes.size());
    REQUIRE_THROWS_AS(mb::load_checkpoint(path), mb::ChecksumError);
    std::filesystem::remove(path);
}
