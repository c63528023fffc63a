#pragma once

#include <string>

#include "rectdiff/tensor.hpp"

namespace rectdiff {

double metric_l1(const Tensor& a, const Tensor& b);  // mean |a-b|
double metric_l2(const Tensor& a, const Tensor& b);  // mean (a-b)^2

// Mean local structural similarity over 7x7 Gaussian windows (sigma 1.5),
// fully-inside windows only, computed on the [-1,1] range remapped to
// [0,1] with the standard constants C1=0.01^2, C2=0.03^2.
double metric_ssim(const Tensor& a, const Tensor& b);

double metric_by_name(const std::string& name, const Tensor& a, const Tensor& b);

// shortest round-trip decimal representation, locale independent
std::string format_double(double v);

}  // namespace rectdiff
