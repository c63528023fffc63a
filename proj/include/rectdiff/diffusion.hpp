#pragma once

#include <functional>
#include <vector>

#include "rectdiff/tensor.hpp"

namespace rectdiff {

// Per-step variance schedule and the coefficients derived from it. Valid
// step indices are 1..T; index 0 is the clean-image sentinel with
// alpha_bar(0) == 1 so that t=1 updates are well defined.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;       // beta[t], t in 1..T (beta[0] unused)
    std::vector<double> alpha;      // 1 - beta[t]
    std::vector<double> alpha_bar;  // prod_{s<=t} alpha[s]; alpha_bar[0] = 1

    double beta_at(int t) const;
    double alpha_at(int t) const;
    double alpha_bar_at(int t) const;       // t in 0..T
    double sqrt_alpha_bar(int t) const;
    double sqrt_one_minus_alpha_bar(int t) const;
    void check_step(int t, bool allow_zero = false) const;
};

NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end);

// Linear schedule rescaled so the cumulative noise at step T matches a
// T=1000 run with the usual 1e-4..0.02 range.
NoiseSchedule make_rescaled_schedule(int T);
NoiseSchedule make_default_toy_schedule();  // T = 100

constexpr int kDefaultToySteps = 100;

// Ordered latents and per-step x0 estimates from one sampling or inversion
// run. Entry i holds the latent at step_indices[i] and the x0 estimate
// computed at that latent. Index 0 denotes the clean image. step_indices is
// strictly monotone: ascending for inversion, descending for sampling.
struct TrajectoryRecord {
    std::vector<int> step_indices;
    std::vector<Tensor> latents;
    std::vector<Tensor> x0_estimates;

    const Tensor& final_latent() const;
    void push(int t, Tensor latent, Tensor x0_estimate);
};

using EpsPredictor = std::function<Tensor(const Tensor& x_t, int t)>;

// x_t = sqrt(abar_t) x0 + sqrt(1-abar_t) eps
Tensor forward_noise(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& s);

// P_t: (x_t - sqrt(1-abar_t) eps_hat) / sqrt(abar_t); t in 0..T
Tensor estimate_x0(const Tensor& x_t, const Tensor& eps_hat, int t, const NoiseSchedule& s);

// Deterministic DDIM update from step t to step t_prev (either direction):
// x_{t_prev} = sqrt(abar_{t_prev}) P_t + sqrt(1-abar_{t_prev}) eps_hat
Tensor ddim_step(const Tensor& x_t, const Tensor& eps_hat, int t, int t_prev,
                 const NoiseSchedule& s);

// Ancestral DDPM update; at t=1 the injected noise is ignored.
Tensor ddpm_step(const Tensor& x_t, const Tensor& eps_hat, int t, const NoiseSchedule& s,
                 const Tensor& noise);

Tensor posterior_mean_true(const Tensor& x0, const Tensor& x_t, int t, const NoiseSchedule& s);
Tensor posterior_mean_predicted(const Tensor& x_t, const Tensor& eps_hat, int t,
                                const NoiseSchedule& s);

// Evenly spaced ascending indices over 1..T, always containing 1 and T.
std::vector<int> uniform_step_indices(int T, int count);

// Reverse-time traversal of the deterministic update: x0 -> x_{t_k}. The
// model is evaluated at each visited latent (clamped to step >= 1).
TrajectoryRecord ddim_invert(const Tensor& x0, const EpsPredictor& model,
                             const std::vector<int>& step_indices, const NoiseSchedule& s);

// Deterministic sampling from a latent at step_indices.back() down to the
// clean image.
TrajectoryRecord ddim_sample(const Tensor& x_start, const EpsPredictor& model,
                             const std::vector<int>& step_indices, const NoiseSchedule& s);

// eps predictor that may condition on the clean image (rectified models).
using ContextEpsPredictor =
    std::function<Tensor(const Tensor& x0, const Tensor& x_t, int t)>;

// Monte-Carlo mean of ||posterior_mean_true - posterior_mean_predicted||^2
// (pixel mean square), over images x uniformly sampled t and forward noise.
double posterior_gap_metric(const ContextEpsPredictor& model,
                            const std::vector<Tensor>& dataset, const NoiseSchedule& s,
                            int num_t_samples, uint64_t seed);

}  // namespace rectdiff
