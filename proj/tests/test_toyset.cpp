#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "rectdiff/container.hpp"
#include "rectdiff/pgm.hpp"
#include "rectdiff/probe.hpp"
#include "rectdiff/toyset.hpp"

using namespace rectdiff;
namespace fs = std::filesystem;

namespace {

fs::path tmpdir() {
    auto p = fs::temp_directory_path() / "rectdiff_toyset_tests";
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("generation is deterministic") {
    auto a = ToyDataset::generate(77, 8);
    auto b = ToyDataset::generate(77, 8);
    REQUIRE(a.size() == 8);
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(bit_equal(a.samples[i].image, b.samples[i].image));
        CHECK(a.samples[i].seed == b.samples[i].seed);
    }
    auto c = ToyDataset::generate(78, 8);
    CHECK(!bit_equal(a.samples[0].image, c.samples[0].image));
}

TEST_CASE("attributes stay inside their ranges and pixels inside [-1,1]") {
    auto ds = ToyDataset::generate(5, 64);
    for (const auto& s : ds.samples) {
        CHECK(s.radius >= 2.0);
        CHECK(s.radius <= 6.0);
        CHECK(s.intensity >= 0.3);
        CHECK(s.intensity <= 1.0);
        CHECK(s.center_x >= 5.0);
        CHECK(s.center_x <= 11.0);
        CHECK(s.center_y >= 5.0);
        CHECK(s.center_y <= 11.0);
        CHECK(s.background >= -1.0);
        CHECK(s.background <= -0.6);
        for (double v : s.image.value()) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
        // regenerable bit-exactly from attributes
        auto re = render_disc(s.radius, s.intensity, s.center_x, s.center_y, s.background);
        CHECK(bit_equal(re, s.image));
    }
}

TEST_CASE("disc mean intensity matches analytic area formula within 2%") {
    // mean pixel = (bg*(A - pi r^2) + fg*pi r^2) / A up to anti-aliasing
    for (auto [r, fg, bg] : {std::tuple{4.0, 0.8, -0.9}, {5.5, 0.5, -0.7}, {3.0, 1.0, -1.0}}) {
        auto img = render_disc(r, fg, 8.0, 8.0, bg);
        double mean = 0.0;
        for (double v : img.value()) mean += v;
        mean /= img.numel();
        double area = 256.0, disc = 3.141592653589793 * r * r;
        double expect = (bg * (area - disc) + fg * disc) / area;
        // tolerance is 2% of the full pixel range
        CHECK(std::fabs(mean - expect) < 0.02 * 2.0);
    }
}

TEST_CASE("dataset round trip is bit-exact") {
    auto p = (tmpdir() / "ds.bin").string();
    auto ds = ToyDataset::generate(9, 16);
    ds.save(p);
    auto ld = ToyDataset::load(p);
    REQUIRE(ld.size() == ds.size());
    for (size_t i = 0; i < ds.size(); ++i) {
        CHECK(bit_equal(ld.samples[i].image, ds.samples[i].image));
        CHECK(ld.samples[i].radius == ds.samples[i].radius);
        CHECK(ld.samples[i].intensity == ds.samples[i].intensity);
        CHECK(ld.samples[i].seed == ds.samples[i].seed);
    }
    // saving again produces identical bytes
    auto p2 = (tmpdir() / "ds2.bin").string();
    ld.save(p2);
    std::ifstream f1(p, std::ios::binary), f2(p2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), {});
    std::string b2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(b1 == b2);
}

TEST_CASE("truncated and corrupt containers give structured errors") {
    auto p = (tmpdir() / "trunc.bin").string();
    auto ds = ToyDataset::generate(1, 2);
    ds.save(p);

    std::ifstream f(p, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(f)), {});
    f.close();

    auto pt = (tmpdir() / "cut.bin").string();
    std::ofstream(pt, std::ios::binary).write(bytes.data(), bytes.size() / 2);
    try {
        ToyDataset::load(pt);
        FAIL("expected truncation error");
    } catch (const Error& e) {
        CHECK(e.category() == ErrorCategory::io);
        CHECK(std::string(e.what()).find("truncated") != std::string::npos);
    }

    auto pc = (tmpdir() / "corrupt.bin").string();
    std::string bad = bytes;
    bad[0] = 'X';
    std::ofstream(pc, std::ios::binary).write(bad.data(), bad.size());
    CHECK_THROWS_AS(ToyDataset::load(pc), Error);

    // version bump rejected with a message naming the version
    auto pv = (tmpdir() / "version.bin").string();
    std::string vb = bytes;
    vb[8] = 9;
    std::ofstream(pv, std::ios::binary).write(vb.data(), vb.size());
    try {
        ToyDataset::load(pv);
        FAIL("expected version error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("version") != std::string::npos);
    }
}

TEST_CASE("container rejects wrong artifact kind") {
    auto p = (tmpdir() / "artifact.bin").string();
    Container c("something-else");
    c.add_f64("x", "data", {1.0, 2.0});
    c.save(p);
    CHECK_THROWS_AS(Container::load(p, "toyset"), Error);
    CHECK_THROWS_AS(ToyDataset::load(p), Error);
}

TEST_CASE("pgm round trip within quantization error") {
    auto p = (tmpdir() / "img.pgm").string();
    auto ds = ToyDataset::generate(3, 1);
    write_pgm(p, ds.samples[0].image);
    auto back = read_pgm(p);
    CHECK(back.shape() == Shape{1, kImageSize, kImageSize});
    for (int64_t i = 0; i < back.numel(); ++i) {
        double d = std::fabs(back.value()[i] - ds.samples[0].image.value()[i]);
        CHECK(d <= 1.0 / 255.0 + 1e-12);
    }
}

TEST_CASE("probe intensity feature is monotone in ground-truth intensity") {
    double prev = -1e9;
    for (int k = 0; k < 10; ++k) {
        double fg = 0.3 + 0.07 * k;
        auto img = render_disc(4.5, fg, 8.0, 8.0, -0.8);
        double feat = probe_embed(img).value()[kProbeIntensity];
        CHECK(feat > prev);
        prev = feat;
    }
}
