#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "occudiff/nn.hpp"
#include "occudiff/sampler.hpp"
#include "occudiff/voxel_grid.hpp"

namespace occudiff {

struct EmbedderConfig {
    int dim = 16;       // cube edge of the grids being embedded
    int features = 64;  // output dimension d
    int c1 = 16, c2 = 32;
    uint64_t seed = 0;
    float clip = 0.25f;  // weight clip at init: bounds the Lipschitz constant

    void validate() const {
        if (dim < 4 || dim % 4 != 0) {
            throw std::invalid_argument("EmbedderConfig: dim must be a multiple of 4, >= 4");
        }
        if (features < 1 || c1 < 1 || c2 < 1) {
            throw std::invalid_argument("EmbedderConfig: channel counts must be >= 1");
        }
        if (!(clip > 0.0f)) throw std::invalid_argument("EmbedderConfig: clip must be > 0");
    }
};

/// Frozen random 3D convolutional feature extractor. Never trained: its only
/// job is to give FID/KID a fixed, deterministic feature space. Weights are
/// drawn once from the seed (serial, fixed order) and clipped, so the same
/// seed reproduces the same embedding bit-for-bit anywhere.
class GridEmbedder {
  public:
    explicit GridEmbedder(const EmbedderConfig& cfg);

    /// Feature vector of one grid. Grids must be dim^3 cubes.
    VecX<float> embed(const VoxelGrid& grid) const;

    /// features x n matrix, one column per grid; embedding runs parallel per
    /// grid, reductions stay per-column, so the result is thread-count
    /// independent.
    Eigen::MatrixXd embed_all(const std::vector<VoxelGrid>& grids) const;

    const EmbedderConfig& config() const { return cfg_; }

  private:
    EmbedderConfig cfg_;
    ParamStore<float> P_;
    Conv3d conv1_, conv2_, conv3_;
};

struct FidOptions {
    bool allow_regularization = true;  // ridge when a set is smaller than d+1
    double ridge = 1e-6;
};

struct FidResult {
    double value = 0.0;
    bool regularized = false;  // a covariance needed the ridge
};

/// Frechet distance between Gaussian fits of two feature sets (columns are
/// samples): |mu_A - mu_B|^2 + tr(S_A + S_B - 2 (S_A S_B)^{1/2}), the matrix
/// square root taken via a symmetric eigendecomposition of
/// S_A^{1/2} S_B S_A^{1/2}. Eigenvalues below -1e-8 abort; small negatives
/// clamp to zero.
FidResult fid(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const FidOptions& opts = {});

struct KidOptions {
    // 0 = single unbiased estimate over the full sets (the default at desk
    // scale); > 0 averages that estimator over `subsets` random subsets of
    // size subset_size.
    int subsets = 0;
    int subset_size = 0;
    uint64_t seed = 0;
};

/// Unbiased MMD^2 with the polynomial kernel k(x,y) = (x'y/d + 1)^3,
/// within-set diagonals excluded, reported x1000.
double kid_x1000(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const KidOptions& opts = {});

/// Intersection-over-union of occupied cells; 1 when both grids are empty.
double iou(const VoxelGrid& pred, const VoxelGrid& gt);

struct VpVo {
    double value = 0.0;
    bool defined = false;  // false (value NaN) when the region has no observed-occupied cell
};

/// Coverage ratio v_p / v_o of one prediction.
VpVo vp_vo(const PredictionResult& result);

/// One aligned evaluation sample: the model prediction, the running-map crop
/// (baseline), and the ground-truth crop at the same pose.
struct EvalTriplet {
    int scene_id = 0;
    int step_id = 0;
    VoxelGrid prediction;
    VoxelGrid baseline;
    VoxelGrid ground_truth;
    double mask_fraction = 0.0;
    double seconds = 0.0;  // prediction wall time, carried through to reports
};

struct MetricReport {
    double fid = 0.0;
    bool fid_regularized = false;
    double kid_x1000 = 0.0;
    double mean_iou = 0.0;
    std::vector<double> iou_series;
    std::vector<double> vp_vo_series;  // NaN where undefined
    std::vector<uint8_t> vp_vo_defined;
    size_t sample_count = 0;
    uint64_t embedder_seed = 0;
};

/// Scores a run against ground truth twice: the model predictions (first) and
/// the running-map baseline (second). Triplets are sorted by (scene, step) id
/// before any reduction so feature sums never depend on discovery order.
std::pair<MetricReport, MetricReport> evaluate_run(std::vector<EvalTriplet> triplets,
                                                   const GridEmbedder& embedder,
                                                   const FidOptions& fid_opts = {},
                                                   const KidOptions& kid_opts = {});

}  // namespace occudiff
