#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "rectdiff/tensor.hpp"

using namespace rectdiff;
using testutil::check_gradients;
using testutil::random_tensor;

TEST_CASE("elementwise arithmetic") {
    auto a = Tensor::from_data({2}, {1, 2});
    auto b = Tensor::from_data({2}, {3, 4});
    auto s = add(a, b);
    CHECK(s.value() == std::vector<double>{4, 6});

    auto sc = scale(a, 2.0);
    CHECK(sc.value() == std::vector<double>{2, 4});

    auto x = Tensor::from_data({3}, {1.5, -2, 0.25}, true);
    auto z = mul(x, Tensor::scalar(0.0));
    CHECK(z.value() == std::vector<double>{0, 0, 0});
    backward(sum_all(z));
    CHECK(x.grad() == std::vector<double>{0, 0, 0});
}

TEST_CASE("shape mismatch reports both shapes") {
    auto a = Tensor::zeros({2, 3});
    auto b = Tensor::zeros({4});
    try {
        add(a, b);
        FAIL("expected shape error");
    } catch (const Error& e) {
        CHECK(e.category() == ErrorCategory::shape);
        std::string msg = e.what();
        CHECK(msg.find("[2,3]") != std::string::npos);
        CHECK(msg.find("[4]") != std::string::npos);
    }
}

TEST_CASE("scalar broadcast on both sides") {
    auto v = Tensor::from_data({3}, {1, 2, 3}, true);
    auto c = Tensor::scalar(2.0, true);
    auto y1 = mul(c, v);
    CHECK(y1.value() == std::vector<double>{2, 4, 6});
    auto y2 = div(v, c);
    CHECK(y2.value() == std::vector<double>{0.5, 1.0, 1.5});

    Rng rng(7);
    auto mk = [&] { return mean_all(div(mul(c, v), add_scalar(sub(v, c), 3.0))); };
    auto r = check_gradients(mk, {v, c});
    CHECK(r.max_rel_err < 1e-6);
}

TEST_CASE("matmul identities") {
    auto eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    auto a = Tensor::from_data({2, 2}, {3, -1, 2, 5});
    CHECK(bit_equal(matmul(eye, a), a));

    auto r = matmul(Tensor::from_data({1, 2}, {1, 2}), Tensor::from_data({2, 1}, {3, 4}));
    CHECK(r.value() == std::vector<double>{11});

    auto bad1 = Tensor::zeros({3, 4});
    auto bad2 = Tensor::zeros({3, 2});
    CHECK_THROWS_AS(matmul(bad1, bad2), Error);
}

TEST_CASE("matmul gradients vs finite differences") {
    Rng rng(42);
    auto a = random_tensor(rng, {3, 4});
    auto b = random_tensor(rng, {4, 2});
    auto w = random_tensor(rng, {3, 2}, false);  // fixed mixing weights
    auto mk = [&] { return mean_all(mul(matmul(a, b), w)); };
    auto r = check_gradients(mk, {a, b});
    CHECK(r.max_rel_err < 1e-5);
    CHECK(r.coords_checked == 20);
}

TEST_CASE("conv2d identity and constant-kernel cases") {
    Rng rng(3);
    auto x = random_tensor(rng, {1, 1, 5, 5}, false);
    auto k1 = Tensor::from_data({1, 1, 1, 1}, {1.0});
    auto y = conv2d(x, k1, Tensor(), 1, 0);
    CHECK(bit_equal(y, x));

    auto xc = Tensor::full({1, 1, 6, 6}, 2.0);
    auto k9 = Tensor::full({1, 1, 3, 3}, 1.0);
    auto y2 = conv2d(xc, k9, Tensor(), 1, 0);
    CHECK(y2.shape() == Shape{1, 1, 4, 4});
    for (double v : y2.value()) CHECK(v == doctest::Approx(18.0).epsilon(1e-12));
}

TEST_CASE("conv2d channel mismatch") {
    auto x = Tensor::zeros({1, 3, 8, 8});
    auto w = Tensor::zeros({4, 2, 3, 3});
    CHECK_THROWS_AS(conv2d(x, w, Tensor(), 1, 1), Error);
}

TEST_CASE("conv2d gradients vs finite differences") {
    Rng rng(11);
    auto x = random_tensor(rng, {1, 2, 8, 8});
    auto w = random_tensor(rng, {4, 2, 3, 3}, true, 0.5);
    auto bias = random_tensor(rng, {4}, true, 0.1);
    auto probe = random_tensor(rng, {1, 4, 8, 8}, false);
    auto mk = [&] { return mean_all(mul(conv2d(x, w, bias, 1, 1), probe)); };
    auto r = check_gradients(mk, {x, w, bias}, 1e-5, 40);
    CHECK(r.max_rel_err < 1e-4);

    // strided path (odd extents so the output grid is exact)
    auto x9 = random_tensor(rng, {1, 2, 9, 9});
    auto mk2 = [&] { return mean_all(conv2d(x9, w, bias, 2, 1)); };
    auto r2 = check_gradients(mk2, {x9, w, bias}, 1e-5, 40);
    CHECK(r2.max_rel_err < 1e-4);

    // ragged stride is rejected rather than floored
    CHECK_THROWS_AS(conv2d(x, w, bias, 2, 1), Error);
}

TEST_CASE("group_norm of constant input is zero") {
    auto x = Tensor::full({2, 4, 3, 3}, 7.5);
    auto y = group_norm(x, 2);
    for (double v : y.value()) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("upsample / downsample / concat") {
    auto x = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
    auto up = upsample_nearest2x(x);
    CHECK(up.shape() == Shape{1, 1, 4, 4});
    CHECK(up.value() == std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4});
    auto down = downsample_avg2x(up);
    CHECK(bit_equal(down, x));

    auto a = Tensor::zeros({2, 2, 4, 4});
    auto b = Tensor::zeros({2, 3, 4, 4});
    CHECK(concat_channels(a, b).shape() == Shape{2, 5, 4, 4});
}

TEST_CASE("backward basics") {
    auto x = Tensor::from_data({3}, {1, -2, 3}, true);
    auto loss = scale(sum_all(mul(x, x)), 0.5);
    backward(loss);
    CHECK(x.grad() == std::vector<double>{1, -2, 3});

    // loss detached from leaf: no grad arrives
    auto y = Tensor::from_data({2}, {1, 2}, true);
    auto l2 = sum_all(detach(mul(y, y)));
    backward(l2);
    CHECK(!y.has_grad());

    // non-scalar loss rejected
    CHECK_THROWS_AS(backward(x), Error);
}

TEST_CASE("repeated backward accumulates into leaf grads") {
    auto x = Tensor::from_data({2}, {3, 4}, true);
    auto mk = [&] { return scale(sum_all(mul(x, x)), 0.5); };
    backward(mk());
    CHECK(x.grad() == std::vector<double>{3, 4});
    backward(mk());
    CHECK(x.grad() == std::vector<double>{6, 8});
    // same tape run twice also accumulates
    x.zero_grad();
    auto tape = Tape::record(mk());
    tape.backward();
    tape.backward();
    CHECK(x.grad() == std::vector<double>{6, 8});
}

TEST_CASE("shared subexpression gradients (diamond graph)") {
    auto x = Tensor::from_data({2}, {2, -1}, true);
    auto u = mul(x, x);
    auto loss = sum_all(add(u, u));  // d/dx 2x^2 = 4x
    backward(loss);
    CHECK(x.grad() == std::vector<double>{8, -4});
}

TEST_CASE("composite graph gradients vs finite differences") {
    Rng rng(5);
    auto x = random_tensor(rng, {1, 2, 4, 4}, true, 0.5);
    auto w = random_tensor(rng, {4, 2, 3, 3}, true, 0.4);
    auto gamma = random_tensor(rng, {4}, true, 0.3);
    auto beta = random_tensor(rng, {4}, true, 0.3);
    auto mk = [&] {
        auto h = conv2d(x, w, Tensor(), 1, 1);
        h = group_norm(h, 2);
        h = channel_affine(h, gamma, beta);
        h = silu(h);
        return sum_all(h);
    };
    auto r = check_gradients(mk, {x, w, gamma, beta}, 1e-5, 30);
    CHECK(r.max_rel_err < 1e-4);
}

TEST_CASE("finite differences across every op, 20 seeds") {
    double worst = 0.0;
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed);
        auto a = random_tensor(rng, {2, 6});
        auto b = random_tensor(rng, {2, 6});
        auto c = Tensor::scalar(rng.uniform(0.5, 2.0), true);
        auto img = random_tensor(rng, {1, 2, 4, 4}, true, 0.6);
        auto img2 = random_tensor(rng, {1, 2, 4, 4}, true, 0.6);
        auto w = random_tensor(rng, {2, 2, 3, 3}, true, 0.4);
        auto bias = random_tensor(rng, {2}, true, 0.2);
        auto lw = random_tensor(rng, {6, 3}, true, 0.5);
        auto lb = random_tensor(rng, {3}, true, 0.2);
        auto fin = random_tensor(rng, {3, 3, 2, 1}, true, 0.5);
        auto fout = random_tensor(rng, {3, 3, 1, 2}, true, 0.5);
        auto pb = random_tensor(rng, {1, 2}, true, 0.3);

        auto mk = [&] {
            auto e = div(add(mul(a, b), c), add_scalar(mul(b, b), 1.0));
            auto l1 = mean_all(abs(e));
            auto l2 = mean_all(linear(e, lw, lb));
            auto g = conv2d(upsample_nearest2x(downsample_avg2x(img)), w, bias, 1, 1);
            g = add_channel_bias(g, pb);
            g = silu(group_norm(g, 2));
            auto delta = separable_kernel(fin, fout);
            auto gk = conv2d(img2, delta, Tensor(), 1, 1);
            auto l3 = mean_all(mul(g, gk));
            auto l4 = sqrt(add_scalar(sum_all(mul(e, e)), 1e-8));
            auto l5 = mean_all(concat_channels(img, neg(img2)));
            return add(add(l1, l2), add(add(l3, l4), l5));
        };
        auto r = check_gradients(mk, {a, b, c, img, img2, w, bias, lw, lb, fin, fout, pb},
                                 1e-5, 12, seed * 77);
        worst = std::max(worst, r.max_rel_err);
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("forward determinism: identical inputs give bit-identical outputs") {
    Rng rng(9);
    auto x = random_tensor(rng, {1, 2, 8, 8}, false);
    auto w = random_tensor(rng, {3, 2, 3, 3}, false);
    auto run = [&] {
        auto h = conv2d(x, w, Tensor(), 1, 1);
        h = silu(group_norm(h, 3));
        return mean_all(h);
    };
    auto y1 = run();
    auto y2 = run();
    CHECK(bit_equal(y1, y2));
}

TEST_CASE("tape replay order does not change gradients beyond 1e-12") {
    Rng rng(21);
    auto x = random_tensor(rng, {1, 2, 4, 4});
    auto w = random_tensor(rng, {2, 2, 3, 3}, true, 0.4);
    auto mk = [&] {
        auto h = conv2d(x, w, Tensor(), 1, 1);
        auto u = mul(h, h);
        return add(mean_all(u), mean_all(silu(h)));
    };
    x.zero_grad();
    w.zero_grad();
    Tape::record(mk()).backward();
    auto gx = x.grad();
    auto gw = w.grad();
    for (uint64_t s = 1; s <= 5; ++s) {
        x.zero_grad();
        w.zero_grad();
        Tape::record_shuffled(mk(), s).backward();
        for (size_t i = 0; i < gx.size(); ++i)
            CHECK(std::fabs(gx[i] - x.grad()[i]) < 1e-12);
        for (size_t i = 0; i < gw.size(); ++i)
            CHECK(std::fabs(gw[i] - w.grad()[i]) < 1e-12);
    }
}

TEST_CASE("no-grad mode records nothing") {
    auto x = Tensor::from_data({2}, {1, 2}, true);
    Tensor y;
    {
        NoGradGuard ng;
        y = mul(x, x);
    }
    CHECK(!y.requires_grad());
    CHECK(y.is_leaf());
}

TEST_CASE("separable_kernel matches outer product exactly") {
    Rng rng(31);
    auto fin = random_tensor(rng, {3, 3, 4, 1}, false);
    auto fout = random_tensor(rng, {3, 3, 1, 5}, false);
    auto delta = separable_kernel(fin, fout);
    CHECK(delta.shape() == Shape{5, 4, 3, 3});
    for (int co = 0; co < 5; ++co)
        for (int ci = 0; ci < 4; ++ci)
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) {
                    double expect = fin.at({i, j, ci, 0}) * fout.at({i, j, 0, co});
                    CHECK(delta.at({co, ci, i, j}) == expect);
                }
}
