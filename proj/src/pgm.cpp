#include "rectdiff/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace rectdiff {

namespace {

// accepts [H,W], [1,H,W] or [1,1,H,W]
std::pair<int, int> image_extents(const Tensor& image) {
    const Shape& s = image.shape();
    if (s.size() == 2) return {s[0], s[1]};
    if (s.size() == 3 && s[0] == 1) return {s[1], s[2]};
    if (s.size() == 4 && s[0] == 1 && s[1] == 1) return {s[2], s[3]};
    throw Error(ErrorCategory::shape, "pgm: expected a single grayscale image, got " + shape_str(s));
}

}  // namespace

void write_pgm(const std::string& path, const Tensor& image) {
    auto [h, w] = image_extents(image);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw Error(ErrorCategory::io, "pgm: cannot open '" + path + "' for writing");
    f << "P5\n" << w << " " << h << "\n255\n";
    std::string bytes(static_cast<size_t>(h) * w, '\0');
    const auto& v = image.value();
    for (size_t i = 0; i < bytes.size(); ++i) {
        double x = std::clamp(v[i], -1.0, 1.0);
        int b = static_cast<int>(std::lround((x + 1.0) * 0.5 * 255.0));
        bytes[i] = static_cast<char>(std::clamp(b, 0, 255));
    }
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f)
        throw Error(ErrorCategory::io, "pgm: short write to '" + path + "'");
}

Tensor read_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw Error(ErrorCategory::io, "pgm: cannot open '" + path + "'");
    std::string magic;
    f >> magic;
    if (magic != "P5")
        throw Error(ErrorCategory::io, "pgm: '" + path + "' is not binary P5");
    int w = 0, h = 0, maxval = 0;
    f >> w >> h >> maxval;
    if (!f || w <= 0 || h <= 0 || maxval != 255)
        throw Error(ErrorCategory::io, "pgm: unsupported header in '" + path + "'");
    f.get();  // single whitespace after maxval
    std::string bytes(static_cast<size_t>(h) * w, '\0');
    f.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (f.gcount() != static_cast<std::streamsize>(bytes.size()))
        throw Error(ErrorCategory::io, "pgm: truncated pixel data in '" + path + "'");
    std::vector<double> v(bytes.size());
    for (size_t i = 0; i < bytes.size(); ++i)
        v[i] = static_cast<double>(static_cast<uint8_t>(bytes[i])) / 255.0 * 2.0 - 1.0;
    return Tensor::from_data({1, h, w}, std::move(v));
}

}  // namespace rectdiff
