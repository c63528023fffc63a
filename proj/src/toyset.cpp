#include "rectdiff/toyset.hpp"

#include <cmath>

#include "rectdiff/container.hpp"
#include "rectdiff/rng.hpp"

namespace rectdiff {

Tensor render_disc(double radius, double intensity, double center_x, double center_y,
                   double background) {
    std::vector<double> px(static_cast<size_t>(kImageSize) * kImageSize);
    for (int i = 0; i < kImageSize; ++i) {
        for (int j = 0; j < kImageSize; ++j) {
            double dx = static_cast<double>(j) - center_x;
            double dy = static_cast<double>(i) - center_y;
            double sd = radius - std::sqrt(dx * dx + dy * dy);
            double t = std::clamp(sd + 0.5, 0.0, 1.0);
            double cov = t * t * (3.0 - 2.0 * t);
            px[static_cast<size_t>(i) * kImageSize + j] = background + (intensity - background) * cov;
        }
    }
    return Tensor::from_data({1, kImageSize, kImageSize}, std::move(px));
}

ToyDataset ToyDataset::generate(uint64_t seed, int n) {
    if (n < 1)
        throw Error(ErrorCategory::config, "toyset: n must be >= 1");
    ToyDataset ds;
    ds.samples.reserve(n);
    for (int i = 0; i < n; ++i) {
        ToySample s;
        s.seed = mix_seed(seed, static_cast<uint64_t>(i));
        Rng rng(s.seed);
        s.radius = rng.uniform(2.0, 6.0);
        s.intensity = rng.uniform(0.3, 1.0);
        s.center_x = rng.uniform(5.0, 11.0);
        s.center_y = rng.uniform(5.0, 11.0);
        s.background = rng.uniform(-1.0, -0.6);
        s.image = render_disc(s.radius, s.intensity, s.center_x, s.center_y, s.background);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

void ToyDataset::save(const std::string& path) const {
    Container c("toyset");
    c.set_meta("image_size", std::to_string(kImageSize));
    c.set_meta("count", std::to_string(samples.size()));
    std::vector<double> pixels, radius, intensity, cx, cy, background;
    std::vector<uint64_t> seeds;
    for (const auto& s : samples) {
        pixels.insert(pixels.end(), s.image.value().begin(), s.image.value().end());
        radius.push_back(s.radius);
        intensity.push_back(s.intensity);
        cx.push_back(s.center_x);
        cy.push_back(s.center_y);
        background.push_back(s.background);
        seeds.push_back(s.seed);
    }
    c.add_f64("images", "pixels", std::move(pixels));
    c.add_f64("radius", "attribute", std::move(radius));
    c.add_f64("intensity", "attribute", std::move(intensity));
    c.add_f64("center_x", "attribute", std::move(cx));
    c.add_f64("center_y", "attribute", std::move(cy));
    c.add_f64("background", "attribute", std::move(background));
    c.add_u64("seeds", "attribute", std::move(seeds));
    c.save(path);
}

ToyDataset ToyDataset::load(const std::string& path) {
    Container c = Container::load(path, "toyset");
    int img_size = std::stoi(c.meta_at("image_size"));
    if (img_size != kImageSize)
        throw Error(ErrorCategory::io, "toyset: unsupported image size " + std::to_string(img_size));
    size_t n = static_cast<size_t>(std::stoull(c.meta_at("count")));
    const auto& pixels = c.at("images").f64;
    const auto& radius = c.at("radius").f64;
    const auto& intensity = c.at("intensity").f64;
    const auto& cx = c.at("center_x").f64;
    const auto& cy = c.at("center_y").f64;
    const auto& background = c.at("background").f64;
    const auto& seeds = c.at("seeds").u64;
    size_t per = static_cast<size_t>(kImageSize) * kImageSize;
    if (pixels.size() != n * per || radius.size() != n || seeds.size() != n)
        throw Error(ErrorCategory::io, "toyset: inconsistent table sizes in '" + path + "'");
    ToyDataset ds;
    ds.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
        auto& s = ds.samples[i];
        s.image = Tensor::from_data({1, kImageSize, kImageSize},
                                    std::vector<double>(pixels.begin() + i * per,
                                                        pixels.begin() + (i + 1) * per));
        s.radius = radius[i];
        s.intensity = intensity[i];
        s.center_x = cx[i];
        s.center_y = cy[i];
        s.background = background[i];
        s.seed = seeds[i];
    }
    return ds;
}

std::vector<Tensor> ToyDataset::images() const {
    std::vector<Tensor> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.image);
    return out;
}

}  // namespace rectdiff
