#pragma once

#include <cstdint>
#include <vector>

#include "occudiff/camera.hpp"
#include "occudiff/local_region.hpp"
#include "occudiff/model.hpp"
#include "occudiff/occupancy_map.hpp"
#include "occudiff/rng.hpp"
#include "occudiff/schedule.hpp"
#include "occudiff/voxel_grid.hpp"

namespace occudiff {

struct SamplerConfig {
    int steps = 30;          // inference steps K (respaced from the training T)
    double guidance = 3.0;   // guidance scale s >= 0
    bool inpaint = true;     // occupancy inpainting of observed space
    bool inpaint_after_denoise = false;  // compose after the network call instead of before
    float threshold = 0.0f;  // binarization threshold in the [-1, 1) domain
    uint64_t seed = 0;
    int parallel = 1;        // simultaneous predictions in sample_many
    int cloud_cap = 1024;    // conditioning points cap in predict_at_pose

    void validate() const {
        if (steps < 1) throw std::invalid_argument("SamplerConfig: steps must be >= 1");
        if (!(guidance >= 0.0)) throw std::invalid_argument("SamplerConfig: guidance must be >= 0");
        if (!(threshold >= -1.0f && threshold < 1.0f)) {
            throw std::invalid_argument("SamplerConfig: threshold must lie in [-1, 1)");
        }
        if (parallel < 1) throw std::invalid_argument("SamplerConfig: parallel must be >= 1");
        if (cloud_cap < 0) throw std::invalid_argument("SamplerConfig: cloud_cap must be >= 0");
    }
};

struct PredictionResult {
    VoxelGrid binary;             // {0, 1} occupancy
    VoxelGrid raw;                // continuous output in [-1, 1]
    std::vector<IVec3> overlay;   // novel predicted-occupied cells (world lattice)
    size_t v_p = 0;               // predicted-occupied cells in the region
    size_t v_o = 0;               // observed-occupied cells in the region
    std::vector<double> step_seconds;  // wall time of each denoising step
};

/// Classifier-free guidance: eps_u + s * (eps_c - eps_u), with the s=0 and
/// s=1 endpoints returned as exact copies.
VoxelGrid cfg_combine(const VoxelGrid& eps_uncond, const VoxelGrid& eps_cond, double s);

/// Noise the known cells to the given respaced step and splice them into x_t.
/// Unknown cells are copied through untouched; the full noise grid is always
/// drawn so rng consumption never depends on the mask.
VoxelGrid inpaint_step(const VoxelGrid& x_t, const LocalRegion& region, int t,
                       const NoiseSchedule& schedule, Rng& rng);

/// Reverse diffusion from pure noise with classifier-free guidance and
/// occupancy inpainting. cloud is the normalized conditioning matrix (may
/// have zero columns). Deterministic given seed.
PredictionResult sample(const Denoiser<float>& model, const NoiseSchedule& schedule,
                        const LocalRegion& region, const MatX<float>& cloud,
                        const SamplerConfig& cfg, uint64_t seed);

/// n independent predictions, seeds derived as seed ^ index; executed with up
/// to cfg.parallel in flight, byte-identical to the sequential order.
std::vector<PredictionResult> sample_many(const Denoiser<float>& model,
                                          const NoiseSchedule& schedule,
                                          const LocalRegion& region, const MatX<float>& cloud,
                                          const SamplerConfig& cfg, int n);

/// Full inference at one trajectory pose: renders the conditioning cloud from
/// ground truth, crops the running map, samples, and computes the overlay of
/// novel cells against the map.
PredictionResult predict_at_pose(const OccupancyMap& map, const Pose& pose,
                                 const VoxelGrid& ground_truth, const DepthCamera& camera,
                                 const Denoiser<float>& model, const NoiseSchedule& schedule,
                                 const SamplerConfig& cfg, uint64_t seed);

}  // namespace occudiff
