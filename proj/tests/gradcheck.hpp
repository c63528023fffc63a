#pragma once

// Central finite-difference oracle used across the test suites. Kept
// independent of the tape: it only re-evaluates forward passes with
// perturbed leaf values.

#include <cmath>
#include <functional>
#include <vector>

#include "rectdiff/rng.hpp"
#include "rectdiff/tensor.hpp"

namespace testutil {

inline double rel_err(double a, double b) {
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-6});
}

struct GradCheck {
    double max_rel_err = 0.0;
    int coords_checked = 0;
};

// make_loss must rebuild the scalar loss from the leaves' current values on
// every call. Checks analytic grads against (f(x+h)-f(x-h))/2h per
// coordinate; max_coords_per_leaf==0 checks every coordinate.
inline GradCheck check_gradients(const std::function<rectdiff::Tensor()>& make_loss,
                                 std::vector<rectdiff::Tensor> leaves, double h = 1e-5,
                                 int max_coords_per_leaf = 0, uint64_t pick_seed = 1234) {
    using rectdiff::Tensor;
    for (auto& l : leaves) l.zero_grad();
    Tensor loss = make_loss();
    rectdiff::backward(loss);

    std::vector<std::vector<double>> analytic;
    for (auto& l : leaves)
        analytic.push_back(l.has_grad() ? l.grad()
                                        : std::vector<double>(l.numel(), 0.0));

    GradCheck res;
    rectdiff::Rng rng(pick_seed);
    for (size_t li = 0; li < leaves.size(); ++li) {
        auto& leaf = leaves[li];
        if (!leaf.requires_grad()) continue;
        std::vector<int64_t> coords;
        int64_t n = leaf.numel();
        if (max_coords_per_leaf == 0 || n <= max_coords_per_leaf) {
            for (int64_t i = 0; i < n; ++i) coords.push_back(i);
        } else {
            for (int k = 0; k < max_coords_per_leaf; ++k)
                coords.push_back(rng.uniform_int(0, static_cast<int>(n - 1)));
        }
        for (int64_t i : coords) {
            double saved = leaf.leaf_value()[i];
            double lp, lm;
            {
                rectdiff::NoGradGuard ng;
                leaf.leaf_value()[i] = saved + h;
                lp = make_loss().item();
                leaf.leaf_value()[i] = saved - h;
                lm = make_loss().item();
            }
            leaf.leaf_value()[i] = saved;
            double fd = (lp - lm) / (2.0 * h);
            res.max_rel_err = std::max(res.max_rel_err, rel_err(fd, analytic[li][i]));
            ++res.coords_checked;
        }
    }
    return res;
}

inline rectdiff::Tensor random_tensor(rectdiff::Rng& rng, rectdiff::Shape shape,
                                      bool requires_grad = true, double stddev = 1.0) {
    return rectdiff::Tensor::from_data(shape, rng.normal_vector(rectdiff::shape_numel(shape), stddev),
                                       requires_grad);
}

}  // namespace testutil
