#include "occudiff/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace occudiff {

size_t NoiseSchedule::check(int t) const {
    if (t < 1 || t > T) throw std::invalid_argument("schedule: t out of range [1, T]");
    return static_cast<size_t>(t - 1);
}

NoiseSchedule schedule_from_betas(std::vector<double> betas) {
    if (betas.empty()) throw std::invalid_argument("schedule: empty beta array");
    NoiseSchedule s;
    s.T = static_cast<int>(betas.size());
    s.beta_table = std::move(betas);
    s.alpha_table.resize(s.beta_table.size());
    s.alpha_bar_table.resize(s.beta_table.size());
    double bar = 1.0;
    for (size_t i = 0; i < s.beta_table.size(); ++i) {
        double b = s.beta_table[i];
        if (!(b > 0.0) || !(b < 1.0)) {
            throw std::invalid_argument("schedule: beta must lie in (0, 1)");
        }
        s.alpha_table[i] = 1.0 - b;
        bar *= s.alpha_table[i];
        s.alpha_bar_table[i] = bar;
    }
    return s;
}

NoiseSchedule linear_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw std::invalid_argument("linear_schedule: T must be >= 1");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
        throw std::invalid_argument("linear_schedule: need 0 < beta_start <= beta_end < 1");
    }
    std::vector<double> betas(static_cast<size_t>(T));
    for (int t = 1; t <= T; ++t) {
        double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(T - 1);
        betas[static_cast<size_t>(t - 1)] = beta_start + (beta_end - beta_start) * frac;
    }
    return schedule_from_betas(std::move(betas));
}

NoiseSchedule default_schedule(int T) {
    double scale = 1000.0 / static_cast<double>(T);
    double beta_end = std::min(0.02 * scale, 0.999);
    return linear_schedule(T, std::min(1e-4 * scale, beta_end), beta_end);
}

TimestepRespacing make_respacing(int T, int K) {
    if (T < 1) throw std::invalid_argument("make_respacing: T must be >= 1");
    if (K < 1 || K > T) throw std::invalid_argument("make_respacing: need 1 <= K <= T");
    TimestepRespacing r;
    r.T = T;
    if (K == 1) {
        r.steps = {T};
        return r;
    }
    int prev = 0;
    for (int i = 0; i < K; ++i) {
        double pos = 1.0 + (static_cast<double>(T) - 1.0) * static_cast<double>(i) /
                               (static_cast<double>(K) - 1.0);
        int t = static_cast<int>(std::llround(pos));
        if (t > prev) {
            r.steps.push_back(t);
            prev = t;
        }
    }
    return r;
}

NoiseSchedule respaced_schedule(const NoiseSchedule& schedule, const TimestepRespacing& respacing) {
    if (respacing.T != schedule.T) {
        throw std::invalid_argument("respaced_schedule: respacing built for a different T");
    }
    if (respacing.steps.empty() || respacing.steps.front() < 1 ||
        respacing.steps.back() > schedule.T) {
        throw std::invalid_argument("respaced_schedule: steps outside [1, T]");
    }
    std::vector<double> betas(respacing.steps.size());
    int prev = 0;
    for (size_t i = 0; i < respacing.steps.size(); ++i) {
        int t = respacing.steps[i];
        if (t <= prev) throw std::invalid_argument("respaced_schedule: steps not increasing");
        if (t - prev == 1) {
            betas[i] = schedule.beta(t);
        } else {
            double bar_prev = prev == 0 ? 1.0 : schedule.alpha_bar(prev);
            betas[i] = 1.0 - schedule.alpha_bar(t) / bar_prev;
        }
        prev = t;
    }
    return schedule_from_betas(std::move(betas));
}

namespace {

void check_grid_pair(const VoxelGrid& a, const VoxelGrid& b, const char* what) {
    if (!a.same_shape(b)) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

}  // namespace

VoxelGrid q_sample(const VoxelGrid& x0, int t, const VoxelGrid& eps,
                   const NoiseSchedule& schedule) {
    check_grid_pair(x0, eps, "q_sample");
    double bar = schedule.alpha_bar(t);
    float a = static_cast<float>(std::sqrt(bar));
    float b = static_cast<float>(std::sqrt(1.0 - bar));
    VoxelGrid out(x0.dims(), x0.voxel_size(), x0.origin());
    for (size_t i = 0; i < out.cell_count(); ++i) {
        out.values()[i] = a * x0.values()[i] + b * eps.values()[i];
    }
    return out;
}

VoxelGrid q_step(const VoxelGrid& x_prev, int t, const VoxelGrid& eps,
                 const NoiseSchedule& schedule) {
    check_grid_pair(x_prev, eps, "q_step");
    double beta = schedule.beta(t);
    float a = static_cast<float>(std::sqrt(1.0 - beta));
    float b = static_cast<float>(std::sqrt(beta));
    VoxelGrid out(x_prev.dims(), x_prev.voxel_size(), x_prev.origin());
    for (size_t i = 0; i < out.cell_count(); ++i) {
        out.values()[i] = a * x_prev.values()[i] + b * eps.values()[i];
    }
    return out;
}

VoxelGrid p_step(const VoxelGrid& x_t, const VoxelGrid& eps_hat, int t,
                 const NoiseSchedule& schedule, const VoxelGrid& z) {
    check_grid_pair(x_t, eps_hat, "p_step");
    check_grid_pair(x_t, z, "p_step");
    double beta = schedule.beta(t);
    double bar = schedule.alpha_bar(t);
    float inv_sqrt_alpha = static_cast<float>(1.0 / std::sqrt(schedule.alpha(t)));
    float eps_coef = static_cast<float>(beta / std::sqrt(1.0 - bar));
    float sigma = static_cast<float>(std::sqrt(beta));
    VoxelGrid out(x_t.dims(), x_t.voxel_size(), x_t.origin());
    for (size_t i = 0; i < out.cell_count(); ++i) {
        float mu = inv_sqrt_alpha * (x_t.values()[i] - eps_coef * eps_hat.values()[i]);
        out.values()[i] = mu + sigma * z.values()[i];
    }
    return out;
}

}  // namespace occudiff
