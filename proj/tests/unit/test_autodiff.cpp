// Copyright (c) 2026, The A2D Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstring>
#include <filesystem>

#include "a2d/autodiff/checkpoint.hpp"
#include "a2d/autodiff/ops.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace a2d;
using namespace a2d::ad;
using a2d::testing::gradcheck;
using a2d::testing::random_tensor;

namespace {

bool bit_equal(std::span<const double> a, std::span<const double> b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("matmul by identity returns the input") {
    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor c = matmul(a, eye);
    CHECK(c.shape() == Shape{2, 2});
    CHECK(std::vector<double>(c.data().begin(), c.data().end()) == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("softmax of equal entries is uniform") {
    Tensor s = softmax(Tensor::from({1, 3}, {0, 0, 0}), 1);
    for (double v : s.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("conv2d of ones counts overlapping taps") {
    Tensor x = Tensor::full({1, 1, 4, 4}, 1.0);
    Tensor w = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor y = conv2d(x, w, {}, 1, 1);
    REQUIRE(y.shape() == Shape{1, 1, 4, 4});
    // interior positions see all nine taps, corners four, edges six
    CHECK(y.at(1 * 4 + 1) == 9.0);
    CHECK(y.at(2 * 4 + 2) == 9.0);
    CHECK(y.at(0) == 4.0);
    CHECK(y.at(1) == 6.0);
}

TEST_CASE("conv2d with stride and depthwise conv output shapes") {
    Rng rng(1);
    Tensor x = random_tensor({2, 3, 5, 5}, rng);
    CHECK(conv2d(x, random_tensor({4, 3, 3, 3}, rng), {}, 2, 1).shape() == Shape{2, 4, 3, 3});
    CHECK(depthwise_conv2d(x, random_tensor({3, 1, 5, 5}, rng), {}, 1, 2).shape() == Shape{2, 3, 5, 5});
    CHECK_THROWS_AS(conv2d(x, random_tensor({4, 2, 3, 3}, rng), {}, 1, 1), ShapeError);
}

TEST_CASE("analytic derivatives of square and relu") {
    Tensor x = Tensor::scalar(3.0, true);
    backward(sum(square(x)));
    CHECK(x.grad()[0] == doctest::Approx(6.0));

    Tensor y = Tensor::scalar(-1.0, true);
    backward(sum(relu(y)));
    CHECK(y.grad()[0] == 0.0);
}

TEST_CASE("backward accumulates until zero_grad") {
    Tensor x = Tensor::scalar(3.0, true);
    backward(sum(square(x)));
    backward(sum(square(x)));
    CHECK(x.grad()[0] == doctest::Approx(12.0));
    x.zero_grad();
    CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("backward rejects a non-scalar loss") {
    Tensor x = Tensor::from({2}, {1, 2}, true);
    CHECK_THROWS(backward(square(x)));
}

TEST_CASE("detach cuts the graph and preserves data") {
    Tensor x = Tensor::scalar(1.7, true);
    Tensor y = mul(detach(x), x);
    backward(sum(y));
    CHECK(x.grad()[0] == doctest::Approx(1.7));

    Tensor src = Tensor::from({3}, {0.1, -2.5, 1e-300}, true);
    Tensor d = detach(src);
    CHECK(bit_equal(d.data(), src.data()));
    CHECK_FALSE(d.requires_grad());
    Tensor z = Tensor::scalar(2.0, true);
    backward(sum(mul(d, z)));
    CHECK(z.has_grad());
    CHECK_FALSE(src.has_grad());
}

TEST_CASE("shape mismatch names the op and both shapes") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({3, 2});
    try {
        add(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("add") != std::string::npos);
        CHECK(msg.find("[2,3]") != std::string::npos);
        CHECK(msg.find("[3,2]") != std::string::npos);
    }
    CHECK_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("softmax rows sum to one") {
    Rng rng(7);
    Tensor x = random_tensor({16, 9}, rng, -30.0, 30.0, false);
    Tensor s = softmax(x, 1);
    for (std::size_t r = 0; r < 16; ++r) {
        double total = 0.0;
        for (std::size_t c = 0; c < 9; ++c) total += s.at(r * 9 + c);
        CHECK(std::abs(total - 1.0) < 1e-12);
    }
}

TEST_CASE("no recording under NoGradGuard") {
    Tensor x = Tensor::scalar(2.0, true);
    NoGradGuard guard;
    Tensor y = square(x);
    CHECK_FALSE(y.requires_grad());
    CHECK(y.node()->is_leaf());
}

TEST_CASE("gradients of every op match finite differences") {
    Rng rng(2024);
    auto check = [](const char* name, const std::function<Tensor()>& f, std::vector<Tensor> in) {
        const auto r = gradcheck(f, std::move(in));
        INFO(name);
        CHECK(r.checked > 0);
        CHECK(r.max_rel_error < 1e-4);
    };
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng), s = random_tensor({1}, rng);
    check("add", [&] { return sum(square(add(a, b))); }, {a, b});
    check("add scalar bcast", [&] { return sum(square(add(a, s))); }, {a, s});
    check("sub", [&] { return sum(square(sub(a, b))); }, {a, b});
    check("mul", [&] { return sum(mul(a, b)); }, {a, b});
    check("mul scalar bcast", [&] { return sum(square(mul(s, a))); }, {a, s});
    check("scale/add_scalar/neg", [&] { return sum(square(neg(add_scalar(scale(a, 1.5), 0.3)))); }, {a});
    check("relu", [&] { return sum(mul(relu(a), b)); }, {a, b});
    check("exp", [&] { return sum(exp(a)); }, {a});
    Tensor pos = random_tensor({3, 4}, rng, 0.2, 2.0);
    check("log", [&] { return sum(log(pos)); }, {pos});
    check("clamp_min", [&] { return sum(mul(clamp_min(a, 0.1), b)); }, {a, b});
    check("mean", [&] { return mean(square(a)); }, {a});
    check("sum axis", [&] { return sum(square(sum(a, 1))); }, {a});
    check("mean axis", [&] { return sum(square(mean(a, 0))); }, {a});
    check("softmax", [&] { return sum(mul(softmax(a, 1), b)); }, {a, b});
    check("softmax axis0", [&] { return sum(mul(softmax(a, 0), b)); }, {a, b});
    check("log_softmax", [&] { return sum(mul(log_softmax(a, 1), b)); }, {a, b});
    Tensor m = random_tensor({4, 5}, rng), bias = random_tensor({5}, rng);
    check("matmul", [&] { return sum(square(matmul(a, m))); }, {a, m});
    check("dense", [&] { return sum(square(dense(a, m, bias))); }, {a, m, bias});
    Tensor x4 = random_tensor({2, 3, 5, 5}, rng);
    Tensor w = random_tensor({4, 3, 3, 3}, rng), cb = random_tensor({4}, rng);
    Tensor dw = random_tensor({3, 1, 3, 3}, rng), db = random_tensor({3}, rng);
    Tensor cs = random_tensor({3}, rng);
    check("conv2d", [&] { return sum(square(conv2d(x4, w, cb, 1, 1))); }, {x4, w, cb});
    check("conv2d stride2", [&] { return sum(square(conv2d(x4, w, cb, 2, 1))); }, {x4, w, cb});
    check("depthwise", [&] { return sum(square(depthwise_conv2d(x4, dw, db, 2, 1))); }, {x4, dw, db});
    check("add_bias", [&] { return sum(square(add_bias(x4, cs))); }, {x4, cs});
    check("scale_channels", [&] { return sum(square(scale_channels(x4, cs))); }, {x4, cs});
    check("global_avg_pool", [&] { return sum(square(global_avg_pool(x4))); }, {x4});
    Tensor gamma = random_tensor({3}, rng, 0.5, 1.5), beta = random_tensor({3}, rng);
    Tensor wbn = random_tensor({2, 3, 5, 5}, rng);
    check("batch_norm2d", [&] { return sum(mul(batch_norm2d(x4, gamma, beta), wbn)); }, {x4, gamma, beta});
    check("reshape", [&] { return sum(mul(reshape(a, {4, 3}), reshape(b, {4, 3}))); }, {a, b});
    check("concat", [&] { return sum(square(concat({a, b}, 1))); }, {a, b});
    check("index_select", [&] { return sum(square(index_select(a, 1, {3, 0, 0}))); }, {a});
}

TEST_CASE("random three-layer MLP gradients match finite differences") {
    Rng rng(99);
    Tensor x = random_tensor({5, 6}, rng, -1, 1, false);
    Tensor w1 = random_tensor({6, 8}, rng), b1 = random_tensor({8}, rng);
    Tensor w2 = random_tensor({8, 8}, rng), b2 = random_tensor({8}, rng);
    Tensor w3 = random_tensor({8, 3}, rng), b3 = random_tensor({3}, rng);
    auto f = [&] {
        Tensor h = relu(dense(x, w1, b1));
        h = relu(dense(h, w2, b2));
        return mean(log_softmax(dense(h, w3, b3), 1));
    };
    CHECK(gradcheck(f, {w1, b1, w2, b2, w3, b3}).max_rel_error < 1e-4);
}

TEST_CASE("forward and backward are bit-reproducible") {
    auto run = [] {
        Rng rng(5);
        Tensor x = random_tensor({2, 3, 6, 6}, rng);
        Tensor w = random_tensor({4, 3, 3, 3}, rng);
        Tensor y = sum(square(relu(conv2d(x, w, {}, 2, 1))));
        backward(y);
        std::vector<double> out{y.item()};
        out.insert(out.end(), w.grad().begin(), w.grad().end());
        out.insert(out.end(), x.grad().begin(), x.grad().end());
        return out;
    };
    const auto a = run(), b = run();
    CHECK(bit_equal(a, b));
}

TEST_CASE("checkpoint round trip is bit exact") {
    Checkpoint ck;
    ck.metadata = R"({"k": 1})";
    ck.entries.push_back({"layer.w", {2, 2}, {1.0 / 3.0, -0.0, 1e-310, 42.0}});
    ck.entries.push_back({"layer.b", {3}, {std::nextafter(1.0, 2.0), -7.25, 0.0}});
    const auto path = std::filesystem::temp_directory_path() / "a2d_ckpt_roundtrip.bin";
    save_checkpoint(path, ck);
    const Checkpoint back = load_checkpoint(path);
    std::filesystem::remove(path);
    CHECK(back.metadata == ck.metadata);
    REQUIRE(back.entries.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(back.entries[i].path == ck.entries[i].path);
        CHECK(back.entries[i].shape == ck.entries[i].shape);
        CHECK(bit_equal(back.entries[i].data, ck.entries[i].data));
    }
    CHECK(back.find("layer.b") != nullptr);
    CHECK(back.find("nope") == nullptr);
}

TEST_CASE("corrupt checkpoints are rejected") {
    Checkpoint ck;
    ck.entries.push_back({"p", {1}, {1.0}});
    std::string bytes = encode_checkpoint(ck);
    CHECK_NOTHROW(decode_checkpoint(bytes));
    CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), CheckpointError);
    CHECK_THROWS_AS(decode_checkpoint(bytes + "x"), CheckpointError);
    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad_magic), CheckpointError);
    std::string bad_version = bytes;
    bad_version[8] = 99;
    CHECK_THROWS_AS(decode_checkpoint(bad_version), CheckpointError);
}
