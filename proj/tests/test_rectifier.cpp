#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "gradcheck.hpp"
#include "rectdiff/rectifier.hpp"

using namespace rectdiff;
using testutil::check_gradients;
using testutil::random_tensor;

namespace {

std::string tmppath(const char* name) {
    auto p = std::filesystem::temp_directory_path() / "rectdiff_rectifier_tests";
    std::filesystem::create_directories(p);
    return (p / name).string();
}

}  // namespace

TEST_CASE("separable factor economy: generated counts match the formula") {
    // one 3x3 layer with Cin=8, Cout=16: factors hold 216 values where the
    // full kernel offset would need 1152
    std::vector<ConvLayerMeta> meta = {{"mid.conv1", BlockKind::middle, true, 16, 8, 3, 3}};
    auto r = build_rectifier(meta, tiny_rectifier_config(), 1);
    CHECK(r.generated_parameter_count() == 216);
    CHECK(9 * 8 * 16 == 1152);
    CHECK(r.subnets.size() == 1);
}

TEST_CASE("one subnet per modulated denoiser layer") {
    auto d = build_denoiser(DenoiserConfig{}, 2);
    auto meta = d.modulatable_meta();
    CHECK(meta.size() == 6);
    auto r = build_rectifier(meta, RectifierConfig{}, 3);
    CHECK(r.subnets.size() == meta.size());
    for (size_t i = 0; i < meta.size(); ++i) CHECK(r.subnets[i].target_layer == meta[i].id);

    // down-block layers are refused
    auto all = d.conv_meta();
    CHECK_THROWS_AS(build_rectifier(all, RectifierConfig{}, 3), Error);
}

TEST_CASE("same seed builds bit-identical rectifiers") {
    auto d = build_denoiser(DenoiserConfig{}, 4);
    auto meta = d.modulatable_meta();
    auto a = build_rectifier(meta, RectifierConfig{}, 9);
    auto b = build_rectifier(meta, RectifierConfig{}, 9);
    CHECK(a.checksum() == b.checksum());
    CHECK(a.checksum() != build_rectifier(meta, RectifierConfig{}, 10).checksum());
}

TEST_CASE("fresh rectifier emits exactly zero offsets") {
    auto d = build_denoiser(DenoiserConfig{}, 5);
    auto r = build_rectifier(d.modulatable_meta(), RectifierConfig{}, 6);
    Rng rng(7);
    auto x0 = random_tensor(rng, {1, 16, 16}, false, 0.5);
    auto est = random_tensor(rng, {1, 16, 16}, false, 0.5);
    auto offsets = predict_offsets(r, x0, est, 37);
    CHECK(offsets.size() == 6);
    for (const auto& [id, o] : offsets) {
        for (double v : o.factor_in.value()) CHECK(v == 0.0);
        for (double v : o.factor_out.value()) CHECK(v == 0.0);
        auto delta = materialize_offset(o);
        for (double v : delta.value()) CHECK(v == 0.0);
    }

    // end to end: modulated sampling-style forward equals the baseline
    auto x = random_tensor(rng, {1, 1, 16, 16}, false);
    CHECK(bit_equal(modulated_predict_eps(d, offsets, x, 37), predict_eps(d, x, 37)));
}

TEST_CASE("predict_offsets is pure and deterministic") {
    auto d = build_denoiser(DenoiserConfig{}, 8);
    auto r = build_rectifier(d.modulatable_meta(), RectifierConfig{}, 9);
    Rng rng(10);
    auto x0 = random_tensor(rng, {1, 16, 16}, false, 0.5);
    auto est = random_tensor(rng, {1, 16, 16}, false, 0.5);
    auto a = predict_offsets(r, x0, est, 12);
    auto b = predict_offsets(r, x0, est, 12);
    for (const auto& [id, o] : a) {
        CHECK(bit_equal(o.factor_in, b.at(id).factor_in));
        CHECK(bit_equal(o.factor_out, b.at(id).factor_out));
    }
}

TEST_CASE("trained-style rectifier responds to the estimate input") {
    auto d = build_denoiser(DenoiserConfig{}, 11);
    auto r = build_rectifier(d.modulatable_meta(), RectifierConfig{}, 12);
    // emulate a trained state: fill the zero heads with small random values
    Rng fill(13);
    for (auto& sn : r.subnets) {
        for (auto* l : {&sn.head_in, &sn.head_out}) {
            auto w = l->weight;
            for (auto& v : w.leaf_value()) v = 0.05 * fill.normal();
        }
    }
    Rng rng(14);
    auto x0 = random_tensor(rng, {1, 16, 16}, false, 0.5);
    auto est_good = x0;
    auto est_bad = add_scalar(scale(x0, 0.8), 0.1);
    auto a = predict_offsets(r, x0, est_good, 30);
    auto b = predict_offsets(r, x0, est_bad, 30);
    double diff = 0.0;
    for (const auto& [id, o] : a)
        diff += max_abs_diff(materialize_offset(o), materialize_offset(b.at(id)));
    CHECK(diff > 1e-9);

    // and to the step index
    auto c = predict_offsets(r, x0, est_bad, 31);
    double tdiff = 0.0;
    for (const auto& [id, o] : c)
        tdiff += max_abs_diff(materialize_offset(o), materialize_offset(b.at(id)));
    CHECK(tdiff > 1e-9);
}

TEST_CASE("materialized offsets are rank-1 per kernel position") {
    std::vector<ConvLayerMeta> meta = {{"up1.conv2", BlockKind::up, true, 6, 5, 3, 3}};
    Rng rng(15);
    auto fin = random_tensor(rng, {3, 3, 5, 1}, false);
    auto fout = random_tensor(rng, {3, 3, 1, 6}, false);
    SeparableOffset o{"up1.conv2", fin, fout};
    auto delta = materialize_offset(o);
    CHECK(delta.shape() == Shape{6, 5, 3, 3});
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            // exact outer-product reconstruction from the stored factors
            for (int ci = 0; ci < 5; ++ci)
                for (int co = 0; co < 6; ++co)
                    CHECK(delta.at({co, ci, i, j}) ==
                          fin.at({i, j, ci, 0}) * fout.at({i, j, 0, co}));
            // independent rank check: all 2x2 minors vanish
            for (int ci = 1; ci < 5; ++ci)
                for (int co = 1; co < 6; ++co) {
                    double m00 = delta.at({0, 0, i, j}), m01 = delta.at({co, 0, i, j});
                    double m10 = delta.at({0, ci, i, j}), m11 = delta.at({co, ci, i, j});
                    double det = m00 * m11 - m01 * m10;
                    double scale = std::max({std::fabs(m00 * m11), std::fabs(m01 * m10), 1e-300});
                    CHECK(std::fabs(det) / scale < 1e-12);
                }
        }

    // zero factor annihilates, scalar case multiplies
    SeparableOffset z{"up1.conv2", Tensor::zeros({3, 3, 5, 1}), fout};
    auto dz = materialize_offset(z);
    for (double v : dz.value()) CHECK(v == 0.0);
    SeparableOffset s{"s", Tensor::full({1, 1, 1, 1}, 3.0), Tensor::full({1, 1, 1, 1}, -2.0)};
    CHECK(materialize_offset(s).value()[0] == -6.0);
}

TEST_CASE("gradients of an offset functional match finite differences") {
    auto d = build_denoiser(tiny_denoiser_config(), 16);
    auto r = build_rectifier(d.modulatable_meta(), tiny_rectifier_config(), 17);
    // non-zero heads so every parameter influences the output
    Rng fill(18);
    for (auto& sn : r.subnets) {
        for (auto* l : {&sn.head_in, &sn.head_out}) {
            auto w = l->weight;
            for (auto& v : w.leaf_value()) v = 0.1 * fill.normal();
        }
    }
    Rng rng(19);
    auto x0 = random_tensor(rng, {1, 8, 8}, false, 0.5);
    auto est = random_tensor(rng, {1, 8, 8}, false, 0.5);
    auto mk = [&] {
        auto offsets = predict_offsets(r, x0, est, 5);
        Tensor acc;
        for (const auto& [id, o] : offsets) {
            auto delta = materialize_offset(o);
            auto term = mean_all(mul(delta, delta));
            acc = acc.defined() ? add(acc, term) : term;
        }
        return acc;
    };
    auto r2 = check_gradients(mk, r.trainable(), 1e-5, 4, 55);
    CHECK(r2.max_rel_err < 1e-4);
}

TEST_CASE("save/load round trip reproduces offsets bit-exactly") {
    auto d = build_denoiser(DenoiserConfig{}, 20);
    auto r = build_rectifier(d.modulatable_meta(), RectifierConfig{}, 21);
    Rng fill(22);
    for (auto& sn : r.subnets) {
        auto w = sn.head_in.weight;
        for (auto& v : w.leaf_value()) v = 0.02 * fill.normal();
    }
    auto path = tmppath("rectifier.bin");
    r.save(path);
    auto q = RectifierParams::load(path);
    CHECK(q.checksum() == r.checksum());

    Rng rng(23);
    auto x0 = random_tensor(rng, {1, 16, 16}, false, 0.5);
    auto est = random_tensor(rng, {1, 16, 16}, false, 0.5);
    auto a = predict_offsets(r, x0, est, 9);
    auto b = predict_offsets(q, x0, est, 9);
    for (const auto& [id, o] : a) {
        CHECK(bit_equal(o.factor_in, b.at(id).factor_in));
        CHECK(bit_equal(o.factor_out, b.at(id).factor_out));
    }

    auto path2 = tmppath("rectifier2.bin");
    q.save(path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), {});
    std::string b2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(b1 == b2);
}
