#include "rectdiff/probe.hpp"

#include <cmath>

namespace rectdiff {

namespace {

constexpr double kEps = 1e-8;

// num/den with a smooth guard: num*den/(den^2 + eps^2). Exact to O(eps^2)
// for any nondegenerate mass and finite everywhere.
Tensor guarded_div(const Tensor& num, const Tensor& den) {
    return div(mul(num, den), add_scalar(mul(den, den), kEps * kEps));
}

struct Grids {
    Tensor x;     // centered column coordinate, px
    Tensor y;     // centered row coordinate, px
    Tensor mask[4];
    double area[4];
};

Grids make_grids(int h, int w) {
    Grids g;
    std::vector<double> gx(static_cast<size_t>(h) * w), gy(gx.size());
    std::vector<std::vector<double>> masks(4, std::vector<double>(gx.size(), 0.0));
    double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    const double edges[5] = {0.0, 2.0, 4.0, 6.0, 1e9};
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            size_t k = static_cast<size_t>(i) * w + j;
            gx[k] = j - cx;
            gy[k] = i - cy;
            double r = std::sqrt(gx[k] * gx[k] + gy[k] * gy[k]);
            for (int b = 0; b < 4; ++b)
                if (r >= edges[b] && r < edges[b + 1]) masks[b][k] = 1.0;
        }
    g.x = Tensor::from_data({h, w}, std::move(gx));
    g.y = Tensor::from_data({h, w}, std::move(gy));
    for (int b = 0; b < 4; ++b) {
        double area = 0.0;
        for (double v : masks[b]) area += v;
        g.area[b] = std::max(area, 1.0);
        g.mask[b] = Tensor::from_data({h, w}, std::move(masks[b]));
    }
    return g;
}

Tensor as_hw(const Tensor& image) {
    const Shape& s = image.shape();
    if (s.size() == 2) return image;
    if (s.size() == 3 && s[0] == 1) return reshape(image, {s[1], s[2]});
    if (s.size() == 4 && s[0] == 1 && s[1] == 1) return reshape(image, {s[2], s[3]});
    throw Error(ErrorCategory::shape,
                "probe_embed: expected a single grayscale image, got " + shape_str(s));
}

}  // namespace

Tensor probe_embed(const Tensor& image) {
    Tensor img = as_hw(image);
    int h = img.shape()[0], w = img.shape()[1];
    Grids g = make_grids(h, w);

    Tensor intensity = mean_all(img);
    Tensor wgt = scale(add_scalar(img, 1.0), 0.5);
    Tensor mass = sum_all(wgt);

    Tensor cx = guarded_div(sum_all(mul(wgt, g.x)), mass);
    Tensor cy = guarded_div(sum_all(mul(wgt, g.y)), mass);
    Tensor dx = sub(g.x, cx);
    Tensor dy = sub(g.y, cy);
    Tensor mu_xx = guarded_div(sum_all(mul(wgt, mul(dx, dx))), mass);
    Tensor mu_yy = guarded_div(sum_all(mul(wgt, mul(dy, dy))), mass);
    Tensor mu_xy = guarded_div(sum_all(mul(wgt, mul(dx, dy))), mass);

    std::vector<Tensor> feats = {intensity, cx, cy, mu_xx, mu_yy, mu_xy};
    // radial profile relative to the global mean weight, so that uniform
    // brightness changes live purely on the intensity axis
    Tensor wbar = mean_all(wgt);
    for (int b = 0; b < 4; ++b)
        feats.push_back(sub(scale(sum_all(mul(wgt, g.mask[b])), 1.0 / g.area[b]), wbar));
    return stack_scalars(feats);
}

AttributeDirection attribute_direction(const std::string& name) {
    std::vector<double> v(kProbeDim, 0.0);
    if (name == "brighter") {
        v[kProbeIntensity] = 1.0;
    } else if (name == "larger") {
        double c = 1.0 / std::sqrt(2.0);
        v[kProbeMuXX] = c;
        v[kProbeMuYY] = c;
    } else {
        throw Error(ErrorCategory::config, "unknown attribute direction '" + name + "'");
    }
    return {name, Tensor::from_data({kProbeDim}, std::move(v))};
}

Tensor directional_loss(const Tensor& x_src, const Tensor& x_tar,
                        const AttributeDirection& dir) {
    if (x_src.shape() != x_tar.shape())
        throw Error(ErrorCategory::shape, "directional_loss: shape mismatch " +
                                              shape_str(x_src.shape()) + " vs " +
                                              shape_str(x_tar.shape()));
    Tensor di = sub(probe_embed(x_tar), probe_embed(x_src));
    Tensor dot = sum_all(mul(di, dir.target));
    Tensor norm = sqrt(add_scalar(sum_all(mul(di, di)), kEps));
    return add_scalar(neg(div(dot, norm)), 1.0);
}

Tensor l1_reg(const Tensor& x_tar, const Tensor& x_src) {
    if (x_src.shape() != x_tar.shape())
        throw Error(ErrorCategory::shape, "l1_reg: shape mismatch " + shape_str(x_tar.shape()) +
                                              " vs " + shape_str(x_src.shape()));
    return mean_all(abs(sub(x_tar, x_src)));
}

double probe_shift(const Tensor& original, const Tensor& edited,
                   const AttributeDirection& dir) {
    NoGradGuard ng;
    Tensor di = sub(probe_embed(edited), probe_embed(original));
    return sum_all(mul(di, dir.target)).item();
}

double off_attribute_drift(const Tensor& original, const Tensor& edited,
                           const AttributeDirection& dir) {
    NoGradGuard ng;
    Tensor di = sub(probe_embed(edited), probe_embed(original));
    double along = sum_all(mul(di, dir.target)).item();
    double ssq = 0.0;
    for (size_t i = 0; i < di.value().size(); ++i) {
        double ortho = di.value()[i] - along * dir.target.value()[i];
        ssq += ortho * ortho;
    }
    return std::sqrt(ssq);
}

}  // namespace rectdiff
