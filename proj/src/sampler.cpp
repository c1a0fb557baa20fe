#include "occudiff/sampler.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

#include "occudiff/dataset.hpp"
#include "occudiff/parallel.hpp"

namespace occudiff {

namespace {

void check_region(const LocalRegion& region) {
    if (!region.known_values.same_shape(region.known_mask)) {
        throw std::invalid_argument("sampler: region values/mask shape mismatch");
    }
    if (region.known_values.cell_count() == 0) {
        throw std::invalid_argument("sampler: empty region");
    }
}

VoxelGrid normal_like(const VoxelGrid& proto, Rng& rng) {
    VoxelGrid g(proto.dims(), proto.voxel_size(), proto.origin());
    rng.fill_normal(g.values().data(), g.values().size());
    return g;
}

void check_finite(const VoxelGrid& x, int step_index, int t_orig) {
    for (float v : x.values()) {
        if (!std::isfinite(v)) {
            throw std::runtime_error("sample: non-finite state at step index " +
                                     std::to_string(step_index) + " (timestep " +
                                     std::to_string(t_orig) + ")");
        }
    }
}

}  // namespace

VoxelGrid cfg_combine(const VoxelGrid& eps_uncond, const VoxelGrid& eps_cond, double s) {
    if (!eps_uncond.same_shape(eps_cond)) {
        throw std::invalid_argument("cfg_combine: shape mismatch");
    }
    if (!(s >= 0.0)) throw std::invalid_argument("cfg_combine: guidance scale must be >= 0");
    // Endpoints are exact copies, not arithmetic that happens to cancel.
    if (s == 0.0) return eps_uncond;
    if (s == 1.0) return eps_cond;
    VoxelGrid out(eps_uncond.dims(), eps_uncond.voxel_size(), eps_uncond.origin());
    const float sf = static_cast<float>(s);
    for (size_t i = 0; i < out.cell_count(); ++i) {
        out.values()[i] =
            eps_uncond.values()[i] + sf * (eps_cond.values()[i] - eps_uncond.values()[i]);
    }
    return out;
}

VoxelGrid inpaint_step(const VoxelGrid& x_t, const LocalRegion& region, int t,
                       const NoiseSchedule& schedule, Rng& rng) {
    check_region(region);
    if (!x_t.same_shape(region.known_values)) {
        throw std::invalid_argument("inpaint_step: state/region shape mismatch");
    }
    // The full noise grid is always drawn so rng consumption is independent of
    // the mask; an all-zero mask then returns x_t bit-exactly (pure copies on
    // the unknown branch, no arithmetic).
    VoxelGrid eps = normal_like(x_t, rng);
    VoxelGrid noised = q_sample(region.known_values, t, eps, schedule);
    VoxelGrid out(x_t.dims(), x_t.voxel_size(), x_t.origin());
    for (size_t i = 0; i < out.cell_count(); ++i) {
        out.values()[i] =
            region.known_mask.values()[i] == 1.0f ? noised.values()[i] : x_t.values()[i];
    }
    return out;
}

PredictionResult sample(const Denoiser<float>& model, const NoiseSchedule& schedule,
                        const LocalRegion& region, const MatX<float>& cloud,
                        const SamplerConfig& cfg, uint64_t seed) {
    cfg.validate();
    check_region(region);
    const int d = model.config().dim;
    if (region.known_values.dims() != IVec3(d, d, d)) {
        throw std::invalid_argument("sample: region dims do not match model dims");
    }
    if (schedule.T != model.config().T) {
        throw std::invalid_argument("sample: schedule T does not match model T");
    }

    const TimestepRespacing respacing = make_respacing(schedule.T, cfg.steps);
    const NoiseSchedule rsched = respaced_schedule(schedule, respacing);
    const int K = rsched.T;

    const bool have_cloud = cloud.cols() > 0;
    const std::optional<VecX<float>> no_cond;
    std::optional<VecX<float>> cond;
    if (have_cloud) cond = model.encode_points(cloud);
    // Guidance degenerates to a single network call at the endpoints: s=0 is
    // the unconditional branch, s=1 the conditional one, and an empty cloud
    // makes both branches the null embedding.
    const bool uncond_only = !have_cloud || cfg.guidance == 0.0;
    const bool cond_only = have_cloud && cfg.guidance == 1.0;

    Rng rng(seed);
    VoxelGrid x = normal_like(region.known_values, rng);
    const VoxelGrid zero(x.dims(), x.voxel_size(), x.origin(), 0.0f);

    PredictionResult result;
    result.step_seconds.reserve(static_cast<size_t>(K));

    for (int i = K; i >= 1; --i) {
        const auto tic = std::chrono::steady_clock::now();
        const int t_orig = respacing.steps[static_cast<size_t>(i - 1)];

        if (cfg.inpaint && !cfg.inpaint_after_denoise) {
            x = inpaint_step(x, region, i, rsched, rng);
        }

        VoxelGrid eps_hat;
        if (uncond_only) {
            eps_hat = predict_noise_grid(model, x, t_orig, no_cond);
        } else if (cond_only) {
            eps_hat = predict_noise_grid(model, x, t_orig, cond);
        } else {
            VoxelGrid eps_u = predict_noise_grid(model, x, t_orig, no_cond);
            VoxelGrid eps_c = predict_noise_grid(model, x, t_orig, cond);
            eps_hat = cfg_combine(eps_u, eps_c, cfg.guidance);
        }

        if (cfg.inpaint && cfg.inpaint_after_denoise) {
            x = inpaint_step(x, region, i, rsched, rng);
        }

        const VoxelGrid z = i > 1 ? normal_like(x, rng) : zero;
        x = p_step(x, eps_hat, i, rsched, z);
        check_finite(x, i, t_orig);

        const auto toc = std::chrono::steady_clock::now();
        result.step_seconds.push_back(std::chrono::duration<double>(toc - tic).count());
    }

    if (cfg.inpaint) {
        // Final composition with zero noise: q_sample at the t -> 0 limit has
        // sqrt(alpha_bar) -> 1, so the known cells are copied through exactly
        // and the preservation guarantee is bitwise, not approximate.
        for (size_t i = 0; i < x.cell_count(); ++i) {
            if (region.known_mask.values()[i] == 1.0f) {
                x.values()[i] = region.known_values.values()[i];
            }
        }
    }
    x.clamp_values(-1.0f, 1.0f);

    result.raw = x;
    result.binary = x.binarize(cfg.threshold);
    result.v_p = result.binary.count_equal(1.0f);
    result.v_o = 0;
    for (size_t i = 0; i < region.known_values.cell_count(); ++i) {
        if (region.known_mask.values()[i] == 1.0f && region.known_values.values()[i] == 1.0f) {
            ++result.v_o;
        }
    }
    return result;
}

std::vector<PredictionResult> sample_many(const Denoiser<float>& model,
                                          const NoiseSchedule& schedule,
                                          const LocalRegion& region, const MatX<float>& cloud,
                                          const SamplerConfig& cfg, int n) {
    cfg.validate();
    if (n < 0) throw std::invalid_argument("sample_many: n must be >= 0");
    std::vector<PredictionResult> results(static_cast<size_t>(n));
    auto run_range = [&](size_t begin, size_t end) {
        for (size_t i = begin; i < end; ++i) {
            results[i] = sample(model, schedule, region, cloud, cfg,
                                cfg.seed ^ static_cast<uint64_t>(i));
        }
    };
    if (cfg.parallel == 1) {
        run_range(0, static_cast<size_t>(n));
    } else {
        parallel_for_blocks(static_cast<size_t>(n), 1, run_range);
    }
    return results;
}

PredictionResult predict_at_pose(const OccupancyMap& map, const Pose& pose,
                                 const VoxelGrid& ground_truth, const DepthCamera& camera,
                                 const Denoiser<float>& model, const NoiseSchedule& schedule,
                                 const SamplerConfig& cfg, uint64_t seed) {
    const int d = model.config().dim;
    const IVec3 dims(d, d, d);
    RenderResult render = render_depth(ground_truth, pose, camera, dims);
    LocalRegion region = extract_local(map, pose, dims);

    Rng cloud_rng(sub_seed(seed, "pose-cloud"));
    std::vector<Vec3f> pts = subsample_cloud(std::move(render.cloud), cfg.cloud_cap, cloud_rng);
    MatX<float> cond = conditioning_matrix(pts, dims, map.voxel_size());

    PredictionResult result = sample(model, schedule, region, cond, cfg, seed);
    result.overlay = merge_prediction(map, region, result.binary);
    return result;
}

}  // namespace occudiff
