#pragma once

#include <vector>

#include "occudiff/voxel_grid.hpp"

namespace occudiff {

/// Forward-diffusion noise schedule. Tables are double precision and
/// 1-indexed through the accessors; the reverse step uses the fixed variance
/// sigma_t^2 = beta_t.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta_table;       // beta_1..beta_T
    std::vector<double> alpha_table;      // alpha_t = 1 - beta_t
    std::vector<double> alpha_bar_table;  // running product of alpha

    double beta(int t) const { return beta_table[check(t)]; }
    double alpha(int t) const { return alpha_table[check(t)]; }
    double alpha_bar(int t) const { return alpha_bar_table[check(t)]; }

  private:
    size_t check(int t) const;
};

/// Builds alpha/alpha_bar tables from a beta array (validated in (0,1)).
NoiseSchedule schedule_from_betas(std::vector<double> betas);

/// beta_t linearly interpolated between the endpoints, inclusive.
NoiseSchedule linear_schedule(int T, double beta_start, double beta_end);

/// Linear schedule with the standard constants for T=1000, scaled in
/// proportion when T is reduced so the terminal alpha_bar stays tiny.
NoiseSchedule default_schedule(int T = 1000);

/// Strictly increasing inference timesteps drawn from [1, T]; the sampler
/// walks them highest-first.
struct TimestepRespacing {
    int T = 0;
    std::vector<int> steps;  // ascending, steps.front() >= 1, steps.back() <= T
};

/// K evenly spaced timesteps over [1, T], rounded to integers and
/// deduplicated; always contains both 1 and T.
TimestepRespacing make_respacing(int T, int K);

/// Schedule over the subsequence: beta'_i = 1 - alpha_bar(t_i)/alpha_bar(t_{i-1}).
/// A unit gap copies beta_{t_i} directly — the expressions are algebraically
/// identical, and the copy keeps an identity respacing bit-exact.
NoiseSchedule respaced_schedule(const NoiseSchedule& schedule, const TimestepRespacing& respacing);

/// Eq. 3: x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps.
VoxelGrid q_sample(const VoxelGrid& x0, int t, const VoxelGrid& eps, const NoiseSchedule& schedule);

/// Eq. 1: x_t = sqrt(1 - beta_t) x_{t-1} + sqrt(beta_t) eps.
VoxelGrid q_step(const VoxelGrid& x_prev, int t, const VoxelGrid& eps,
                 const NoiseSchedule& schedule);

/// Reverse step, epsilon parameterization:
/// mu = (x_t - (beta_t/sqrt(1-alpha_bar_t)) eps_hat) / sqrt(alpha_t),
/// x_{t-1} = mu + sqrt(beta_t) z. Pass z = 0 at the final step.
VoxelGrid p_step(const VoxelGrid& x_t, const VoxelGrid& eps_hat, int t,
                 const NoiseSchedule& schedule, const VoxelGrid& z);

}  // namespace occudiff
