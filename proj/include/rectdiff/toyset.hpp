#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rectdiff/tensor.hpp"

namespace rectdiff {

constexpr int kImageSize = 16;

// One anti-aliased disc image with its generating attributes. The image is
// a pure function of the attributes; the seed records which draw produced
// them.
struct ToySample {
    Tensor image;  // [1,16,16], values in [-1,1]
    double radius = 0.0;      // px, in [2,6]
    double intensity = 0.0;   // disc value, in [0.3,1.0]
    double center_x = 0.0;    // px, in [5,11]
    double center_y = 0.0;    // px, in [5,11]
    double background = 0.0;  // in [-1,-0.6]
    uint64_t seed = 0;
};

// Disc over a uniform background, edge smoothed across one pixel by a
// smoothstep of the signed distance to the rim.
Tensor render_disc(double radius, double intensity, double center_x, double center_y,
                   double background);

struct ToyDataset {
    std::vector<ToySample> samples;

    static ToyDataset generate(uint64_t seed, int n);

    void save(const std::string& path) const;
    static ToyDataset load(const std::string& path);

    std::vector<Tensor> images() const;
    size_t size() const { return samples.size(); }
};

}  // namespace rectdiff
