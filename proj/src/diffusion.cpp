#include "rectdiff/diffusion.hpp"

#include <cmath>

#include "rectdiff/rng.hpp"

namespace rectdiff {

namespace {

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw Error(ErrorCategory::shape, std::string(op) + ": shape mismatch " +
                                              shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

double NoiseSchedule::beta_at(int t) const {
    check_step(t);
    return beta[t];
}

double NoiseSchedule::alpha_at(int t) const {
    check_step(t);
    return alpha[t];
}

double NoiseSchedule::alpha_bar_at(int t) const {
    check_step(t, /*allow_zero=*/true);
    return alpha_bar[t];
}

double NoiseSchedule::sqrt_alpha_bar(int t) const { return std::sqrt(alpha_bar_at(t)); }

double NoiseSchedule::sqrt_one_minus_alpha_bar(int t) const {
    return std::sqrt(1.0 - alpha_bar_at(t));
}

void NoiseSchedule::check_step(int t, bool allow_zero) const {
    int lo = allow_zero ? 0 : 1;
    if (t < lo || t > T)
        throw Error(ErrorCategory::state, "noise schedule: step " + std::to_string(t) +
                                              " outside " + std::to_string(lo) + ".." +
                                              std::to_string(T));
}

NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end) {
    if (T < 2)
        throw Error(ErrorCategory::config, "make_linear_schedule: T must be >= 2");
    if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end)
        throw Error(ErrorCategory::config,
                    "make_linear_schedule: need 0 < beta_start <= beta_end < 1, got " +
                        std::to_string(beta_start) + ".." + std::to_string(beta_end));
    NoiseSchedule s;
    s.T = T;
    s.beta.assign(T + 1, 0.0);
    s.alpha.assign(T + 1, 1.0);
    s.alpha_bar.assign(T + 1, 1.0);
    for (int t = 1; t <= T; ++t) {
        s.beta[t] = beta_start + (beta_end - beta_start) * static_cast<double>(t - 1) /
                                     static_cast<double>(T - 1);
        s.alpha[t] = 1.0 - s.beta[t];
        s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
    }
    return s;
}

NoiseSchedule make_rescaled_schedule(int T) {
    double k = 1000.0 / static_cast<double>(T);
    return make_linear_schedule(T, 1e-4 * k, 0.02 * k);
}

NoiseSchedule make_default_toy_schedule() { return make_rescaled_schedule(kDefaultToySteps); }

const Tensor& TrajectoryRecord::final_latent() const {
    if (latents.empty())
        throw Error(ErrorCategory::state, "trajectory: empty record");
    return latents.back();
}

void TrajectoryRecord::push(int t, Tensor latent, Tensor x0_estimate) {
    if (!step_indices.empty()) {
        int last = step_indices.back();
        if (t == last)
            throw Error(ErrorCategory::state, "trajectory: repeated step index " + std::to_string(t));
        if (step_indices.size() >= 2) {
            bool ascending = step_indices[1] > step_indices[0];
            if (ascending != (t > last))
                throw Error(ErrorCategory::state,
                            "trajectory: step indices must stay strictly monotone");
        }
    }
    step_indices.push_back(t);
    latents.push_back(std::move(latent));
    x0_estimates.push_back(std::move(x0_estimate));
}

Tensor forward_noise(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& s) {
    check_same_shape("forward_noise", x0, eps);
    s.check_step(t);
    return add(scale(x0, s.sqrt_alpha_bar(t)), scale(eps, s.sqrt_one_minus_alpha_bar(t)));
}

Tensor estimate_x0(const Tensor& x_t, const Tensor& eps_hat, int t, const NoiseSchedule& s) {
    check_same_shape("estimate_x0", x_t, eps_hat);
    s.check_step(t, /*allow_zero=*/true);
    return scale(sub(x_t, scale(eps_hat, s.sqrt_one_minus_alpha_bar(t))),
                 1.0 / s.sqrt_alpha_bar(t));
}

Tensor ddim_step(const Tensor& x_t, const Tensor& eps_hat, int t, int t_prev,
                 const NoiseSchedule& s) {
    s.check_step(t, /*allow_zero=*/true);
    s.check_step(t_prev, /*allow_zero=*/true);
    if (t == t_prev)
        throw Error(ErrorCategory::state, "ddim_step: t_prev must differ from t");
    Tensor x0_hat = estimate_x0(x_t, eps_hat, t, s);
    return add(scale(x0_hat, s.sqrt_alpha_bar(t_prev)),
               scale(eps_hat, s.sqrt_one_minus_alpha_bar(t_prev)));
}

Tensor ddpm_step(const Tensor& x_t, const Tensor& eps_hat, int t, const NoiseSchedule& s,
                 const Tensor& noise) {
    s.check_step(t);
    Tensor mean = posterior_mean_predicted(x_t, eps_hat, t, s);
    if (t == 1) return mean;
    check_same_shape("ddpm_step", x_t, noise);
    double sigma2 = s.beta_at(t) * (1.0 - s.alpha_bar_at(t - 1)) / (1.0 - s.alpha_bar_at(t));
    return add(mean, scale(noise, std::sqrt(sigma2)));
}

Tensor posterior_mean_true(const Tensor& x0, const Tensor& x_t, int t, const NoiseSchedule& s) {
    check_same_shape("posterior_mean_true", x0, x_t);
    s.check_step(t);
    double denom = 1.0 - s.alpha_bar_at(t);
    double c0 = s.sqrt_alpha_bar(t - 1) * s.beta_at(t) / denom;
    double ct = std::sqrt(s.alpha_at(t)) * (1.0 - s.alpha_bar_at(t - 1)) / denom;
    return add(scale(x0, c0), scale(x_t, ct));
}

Tensor posterior_mean_predicted(const Tensor& x_t, const Tensor& eps_hat, int t,
                                const NoiseSchedule& s) {
    Tensor x0_hat = estimate_x0(x_t, eps_hat, t, s);
    return posterior_mean_true(x0_hat, x_t, t, s);
}

std::vector<int> uniform_step_indices(int T, int count) {
    if (count < 1 || count > T)
        throw Error(ErrorCategory::config, "uniform_step_indices: count " + std::to_string(count) +
                                               " outside 1.." + std::to_string(T));
    if (count == 1) return {T};
    std::vector<int> idx;
    idx.reserve(count);
    for (int i = 0; i < count; ++i) {
        double v = 1.0 + (static_cast<double>(T) - 1.0) * i / (count - 1);
        int t = static_cast<int>(std::lround(v));
        if (!idx.empty() && t <= idx.back()) t = idx.back() + 1;
        idx.push_back(t);
    }
    idx.front() = 1;
    idx.back() = T;
    return idx;
}

TrajectoryRecord ddim_invert(const Tensor& x0, const EpsPredictor& model,
                             const std::vector<int>& step_indices, const NoiseSchedule& s) {
    for (size_t i = 0; i < step_indices.size(); ++i) {
        s.check_step(step_indices[i]);
        if (i > 0 && step_indices[i] <= step_indices[i - 1])
            throw Error(ErrorCategory::state, "ddim_invert: step indices must be ascending");
    }
    TrajectoryRecord rec;
    rec.push(0, x0, x0);
    Tensor x = x0;
    int cur = 0;
    Tensor eps = step_indices.empty() ? Tensor() : model(x, 1);
    for (int target : step_indices) {
        x = ddim_step(x, eps, cur, target, s);
        cur = target;
        eps = model(x, cur);
        rec.push(cur, x, estimate_x0(x, eps, cur, s));
    }
    return rec;
}

TrajectoryRecord ddim_sample(const Tensor& x_start, const EpsPredictor& model,
                             const std::vector<int>& step_indices, const NoiseSchedule& s) {
    if (step_indices.empty())
        throw Error(ErrorCategory::state, "ddim_sample: empty step indices");
    for (size_t i = 0; i < step_indices.size(); ++i) {
        s.check_step(step_indices[i]);
        if (i > 0 && step_indices[i] <= step_indices[i - 1])
            throw Error(ErrorCategory::state, "ddim_sample: step indices must be ascending");
    }
    TrajectoryRecord rec;
    Tensor x = x_start;
    for (size_t k = step_indices.size(); k-- > 0;) {
        int cur = step_indices[k];
        Tensor eps = model(x, cur);
        Tensor est = estimate_x0(x, eps, cur, s);
        rec.push(cur, x, est);
        int target = (k == 0) ? 0 : step_indices[k - 1];
        x = add(scale(est, s.sqrt_alpha_bar(target)),
                scale(eps, s.sqrt_one_minus_alpha_bar(target)));
    }
    rec.push(0, x, x);
    return rec;
}

double posterior_gap_metric(const ContextEpsPredictor& model,
                            const std::vector<Tensor>& dataset, const NoiseSchedule& s,
                            int num_t_samples, uint64_t seed) {
    if (dataset.empty())
        throw Error(ErrorCategory::state, "posterior_gap_metric: empty dataset");
    if (num_t_samples < 1)
        throw Error(ErrorCategory::config, "posterior_gap_metric: num_t_samples must be >= 1");
    NoGradGuard ng;
    Rng rng(seed);
    double total = 0.0;
    int64_t count = 0;
    for (const Tensor& x0 : dataset) {
        for (int k = 0; k < num_t_samples; ++k) {
            int t = rng.uniform_int(1, s.T);
            Tensor eps = Tensor::from_data(x0.shape(), rng.normal_vector(x0.numel()));
            Tensor x_t = forward_noise(x0, t, eps, s);
            Tensor eps_hat = model(x0, x_t, t);
            Tensor gap = sub(posterior_mean_true(x0, x_t, t, s),
                             posterior_mean_predicted(x_t, eps_hat, t, s));
            total += mean_all(mul(gap, gap)).item();
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

}  // namespace rectdiff
