#include "rectdiff/metrics.hpp"

#include <charconv>
#include <cmath>

namespace rectdiff {

namespace {

void check_pair(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw Error(ErrorCategory::shape, std::string(op) + ": shape mismatch " +
                                              shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

std::pair<int, int> hw_of(const Tensor& t) {
    const Shape& s = t.shape();
    if (s.size() == 2) return {s[0], s[1]};
    if (s.size() == 3 && s[0] == 1) return {s[1], s[2]};
    if (s.size() == 4 && s[0] == 1 && s[1] == 1) return {s[2], s[3]};
    throw Error(ErrorCategory::shape, "ssim: expected a single image, got " + shape_str(s));
}

}  // namespace

double metric_l1(const Tensor& a, const Tensor& b) {
    check_pair("metric_l1", a, b);
    double s = 0.0;
    for (size_t i = 0; i < a.value().size(); ++i) s += std::fabs(a.value()[i] - b.value()[i]);
    return s / static_cast<double>(a.numel());
}

double metric_l2(const Tensor& a, const Tensor& b) {
    check_pair("metric_l2", a, b);
    double s = 0.0;
    for (size_t i = 0; i < a.value().size(); ++i) {
        double d = a.value()[i] - b.value()[i];
        s += d * d;
    }
    return s / static_cast<double>(a.numel());
}

double metric_ssim(const Tensor& a, const Tensor& b) {
    check_pair("metric_ssim", a, b);
    auto [h, w] = hw_of(a);
    constexpr int kWin = 7;
    constexpr int kHalf = kWin / 2;
    constexpr double kC1 = 0.01 * 0.01;
    constexpr double kC2 = 0.03 * 0.03;
    if (h < kWin || w < kWin)
        throw Error(ErrorCategory::shape, "ssim: image smaller than the 7x7 window");

    // normalized gaussian weights, sigma 1.5
    double wt[kWin][kWin];
    double wsum = 0.0;
    for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
            double dy = i - kHalf, dx = j - kHalf;
            wt[i][j] = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
            wsum += wt[i][j];
        }
    for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) wt[i][j] /= wsum;

    const auto& av = a.value();
    const auto& bv = b.value();
    auto px = [w](const std::vector<double>& v, int i, int j) {
        return (v[static_cast<size_t>(i) * w + j] + 1.0) * 0.5;
    };

    double total = 0.0;
    int64_t windows = 0;
    for (int ci = kHalf; ci < h - kHalf; ++ci) {
        for (int cj = kHalf; cj < w - kHalf; ++cj) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int i = 0; i < kWin; ++i)
                for (int j = 0; j < kWin; ++j) {
                    double g = wt[i][j];
                    double xa = px(av, ci + i - kHalf, cj + j - kHalf);
                    double xb = px(bv, ci + i - kHalf, cj + j - kHalf);
                    ma += g * xa;
                    mb += g * xb;
                    saa += g * xa * xa;
                    sbb += g * xb * xb;
                    sab += g * xa * xb;
                }
            double va = saa - ma * ma;
            double vb = sbb - mb * mb;
            double cab = sab - ma * mb;
            double ssim = ((2 * ma * mb + kC1) * (2 * cab + kC2)) /
                          ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
            total += ssim;
            ++windows;
        }
    }
    return total / static_cast<double>(windows);
}

double metric_by_name(const std::string& name, const Tensor& a, const Tensor& b) {
    if (name == "L1") return metric_l1(a, b);
    if (name == "L2") return metric_l2(a, b);
    if (name == "SSIM") return metric_ssim(a, b);
    throw Error(ErrorCategory::config, "unknown metric '" + name + "'");
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace rectdiff
