#include "occudiff/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "occudiff/parallel.hpp"
#include "occudiff/rng.hpp"

namespace occudiff {

GridEmbedder::GridEmbedder(const EmbedderConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    conv1_ = Conv3d::make(P_, "embed.conv1", 1, cfg_.c1, cfg_.dim, 2);
    conv2_ = Conv3d::make(P_, "embed.conv2", cfg_.c1, cfg_.c2, cfg_.dim / 2, 2);
    conv3_ = Conv3d::make(P_, "embed.conv3", cfg_.c2, cfg_.features, cfg_.dim / 4, 1);
    P_.allocate();
    P_.init(cfg_.seed);
    auto& theta = P_.theta();
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        theta[i] = std::clamp(theta[i], -cfg_.clip, cfg_.clip);
    }
}

VecX<float> GridEmbedder::embed(const VoxelGrid& grid) const {
    const int d = cfg_.dim;
    if (grid.dims() != IVec3(d, d, d)) {
        throw std::invalid_argument("embed: grid dims do not match the embedder");
    }
    Eigen::Map<const Eigen::Matrix<float, 1, Eigen::Dynamic>> row(grid.values().data(),
                                                                  grid.cell_count());
    MatX<float> x = row;
    MatX<float> h1 = silu(conv3d_forward(P_, conv1_, x));
    MatX<float> h2 = silu(conv3d_forward(P_, conv2_, h1));
    MatX<float> h3 = silu(conv3d_forward(P_, conv3_, h2));
    return h3.rowwise().mean();
}

Eigen::MatrixXd GridEmbedder::embed_all(const std::vector<VoxelGrid>& grids) const {
    Eigen::MatrixXd out(cfg_.features, static_cast<Eigen::Index>(grids.size()));
    parallel_for_blocks(grids.size(), 1, [&](size_t begin, size_t end) {
        for (size_t i = begin; i < end; ++i) {
            out.col(static_cast<Eigen::Index>(i)) = embed(grids[i]).cast<double>();
        }
    });
    return out;
}

namespace {

// Sample mean and unbiased covariance of column-sample features, with the
// documented ridge when the set is too small for a full-rank covariance.
struct GaussianFit {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    bool regularized = false;
};

GaussianFit fit_gaussian(const Eigen::MatrixXd& f, const FidOptions& opts) {
    const Eigen::Index d = f.rows();
    const Eigen::Index n = f.cols();
    GaussianFit g;
    g.mean = f.rowwise().mean();
    Eigen::MatrixXd centered = f.colwise() - g.mean;
    g.cov = centered * centered.transpose() / static_cast<double>(n - 1);
    if (n < d + 1) {
        if (!opts.allow_regularization) {
            throw std::invalid_argument(
                "fid: fewer samples than feature dim + 1 and regularization is disabled");
        }
        g.cov += opts.ridge * Eigen::MatrixXd::Identity(d, d);
        g.regularized = true;
    }
    return g;
}

// Symmetric PSD square root; eigenvalues below -1e-8 indicate a real defect
// rather than rounding and abort the metric.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    if (es.info() != Eigen::Success) {
        throw std::runtime_error(std::string(what) + ": eigendecomposition failed");
    }
    Eigen::VectorXd lam = es.eigenvalues();
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
        if (lam[i] < -1e-8) {
            throw std::runtime_error(std::string(what) + ": negative eigenvalue beyond tolerance");
        }
        lam[i] = std::sqrt(std::max(lam[i], 0.0));
    }
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

double sqrt_trace(const Eigen::MatrixXd& m, const char* what) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    if (es.info() != Eigen::Success) {
        throw std::runtime_error(std::string(what) + ": eigendecomposition failed");
    }
    double tr = 0.0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        double lam = es.eigenvalues()[i];
        if (lam < -1e-8) {
            throw std::runtime_error(std::string(what) + ": negative eigenvalue beyond tolerance");
        }
        tr += std::sqrt(std::max(lam, 0.0));
    }
    return tr;
}

void check_features(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* what) {
    if (a.rows() != b.rows()) {
        throw std::invalid_argument(std::string(what) + ": feature dimensions differ");
    }
    if (a.rows() < 1) throw std::invalid_argument(std::string(what) + ": empty feature vectors");
    if (!a.allFinite() || !b.allFinite()) {
        throw std::invalid_argument(std::string(what) + ": non-finite feature");
    }
}

// Unbiased MMD^2 with k(x,y) = (x'y/d + 1)^3; within-set diagonals excluded.
double mmd2_unbiased(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    const double d = static_cast<double>(a.rows());
    const double m = static_cast<double>(a.cols());
    const double n = static_cast<double>(b.cols());
    auto kernel = [&](const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
        Eigen::MatrixXd k = (x.transpose() * y / d).array() + 1.0;
        return Eigen::MatrixXd(k.array().cube());
    };
    Eigen::MatrixXd kaa = kernel(a, a);
    Eigen::MatrixXd kbb = kernel(b, b);
    Eigen::MatrixXd kab = kernel(a, b);
    const double sum_aa = kaa.sum() - kaa.trace();
    const double sum_bb = kbb.sum() - kbb.trace();
    return sum_aa / (m * (m - 1.0)) + sum_bb / (n * (n - 1.0)) - 2.0 * kab.sum() / (m * n);
}

Eigen::MatrixXd take_columns(const Eigen::MatrixXd& f, const std::vector<Eigen::Index>& idx) {
    Eigen::MatrixXd out(f.rows(), static_cast<Eigen::Index>(idx.size()));
    for (size_t i = 0; i < idx.size(); ++i) {
        out.col(static_cast<Eigen::Index>(i)) = f.col(idx[i]);
    }
    return out;
}

std::vector<Eigen::Index> draw_subset(Eigen::Index n, int k, Rng& rng) {
    std::vector<Eigen::Index> idx(static_cast<size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    for (int i = 0; i < k; ++i) {
        const auto j =
            static_cast<size_t>(rng.uniform_int(i, static_cast<int64_t>(n) - 1));
        std::swap(idx[static_cast<size_t>(i)], idx[j]);
    }
    idx.resize(static_cast<size_t>(k));
    return idx;
}

size_t count_occupied(const VoxelGrid& g) { return g.count_equal(1.0f); }

}  // namespace

FidResult fid(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const FidOptions& opts) {
    check_features(a, b, "fid");
    if (a.cols() < 2 || b.cols() < 2) {
        throw std::invalid_argument("fid: need at least 2 samples per set");
    }
    GaussianFit ga = fit_gaussian(a, opts);
    GaussianFit gb = fit_gaussian(b, opts);
    Eigen::MatrixXd sa_half = psd_sqrt(ga.cov, "fid");
    Eigen::MatrixXd inner = sa_half * gb.cov * sa_half;
    inner = 0.5 * (inner + inner.transpose());
    const double tr_sqrt = sqrt_trace(inner, "fid");
    FidResult r;
    r.value = (ga.mean - gb.mean).squaredNorm() + ga.cov.trace() + gb.cov.trace() - 2.0 * tr_sqrt;
    r.regularized = ga.regularized || gb.regularized;
    return r;
}

double kid_x1000(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const KidOptions& opts) {
    check_features(a, b, "kid");
    if (a.cols() < 2 || b.cols() < 2) {
        throw std::invalid_argument("kid: need at least 2 samples per set");
    }
    if (opts.subsets == 0) {
        return 1000.0 * mmd2_unbiased(a, b);
    }
    if (opts.subsets < 0 || opts.subset_size < 2 ||
        opts.subset_size > std::min(a.cols(), b.cols())) {
        throw std::invalid_argument("kid: bad subset configuration");
    }
    double acc = 0.0;
    for (int rep = 0; rep < opts.subsets; ++rep) {
        Rng rng(sub_seed(opts.seed, "kid-subset", static_cast<uint64_t>(rep)));
        Eigen::MatrixXd sa = take_columns(a, draw_subset(a.cols(), opts.subset_size, rng));
        Eigen::MatrixXd sb = take_columns(b, draw_subset(b.cols(), opts.subset_size, rng));
        acc += mmd2_unbiased(sa, sb);
    }
    return 1000.0 * acc / static_cast<double>(opts.subsets);
}

double iou(const VoxelGrid& pred, const VoxelGrid& gt) {
    if (!pred.same_shape(gt)) throw std::invalid_argument("iou: dims mismatch");
    size_t inter = 0, uni = 0;
    for (size_t i = 0; i < pred.cell_count(); ++i) {
        const bool p = pred.values()[i] == 1.0f;
        const bool g = gt.values()[i] == 1.0f;
        if (p && g) ++inter;
        if (p || g) ++uni;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

VpVo vp_vo(const PredictionResult& result) {
    VpVo r;
    if (result.v_o == 0) {
        r.value = std::numeric_limits<double>::quiet_NaN();
        r.defined = false;
        return r;
    }
    r.value = static_cast<double>(result.v_p) / static_cast<double>(result.v_o);
    r.defined = true;
    return r;
}

std::pair<MetricReport, MetricReport> evaluate_run(std::vector<EvalTriplet> triplets,
                                                   const GridEmbedder& embedder,
                                                   const FidOptions& fid_opts,
                                                   const KidOptions& kid_opts) {
    if (triplets.empty()) throw std::invalid_argument("evaluate_run: no samples");
    const int d = embedder.config().dim;
    const IVec3 dims(d, d, d);
    for (const EvalTriplet& t : triplets) {
        if (t.prediction.dims() != dims || t.baseline.dims() != dims ||
            t.ground_truth.dims() != dims) {
            throw std::invalid_argument("evaluate_run: misaligned sample triplet");
        }
    }
    // Order-stabilize every reduction: sort by sample id, keeping input order
    // among equal ids, so directory enumeration order can never shift a sum.
    std::stable_sort(triplets.begin(), triplets.end(),
                     [](const EvalTriplet& x, const EvalTriplet& y) {
                         if (x.scene_id != y.scene_id) return x.scene_id < y.scene_id;
                         return x.step_id < y.step_id;
                     });

    std::vector<VoxelGrid> ss, bl, gt;
    ss.reserve(triplets.size());
    bl.reserve(triplets.size());
    gt.reserve(triplets.size());
    for (const EvalTriplet& t : triplets) {
        ss.push_back(t.prediction);
        bl.push_back(t.baseline);
        gt.push_back(t.ground_truth);
    }
    const Eigen::MatrixXd f_ss = embedder.embed_all(ss);
    const Eigen::MatrixXd f_bl = embedder.embed_all(bl);
    const Eigen::MatrixXd f_gt = embedder.embed_all(gt);

    auto make_report = [&](const Eigen::MatrixXd& f, bool is_baseline) {
        MetricReport rep;
        FidResult fr = fid(f, f_gt, fid_opts);
        rep.fid = fr.value;
        rep.fid_regularized = fr.regularized;
        rep.kid_x1000 = kid_x1000(f, f_gt, kid_opts);
        rep.sample_count = triplets.size();
        rep.embedder_seed = embedder.config().seed;
        for (const EvalTriplet& t : triplets) {
            const VoxelGrid& predicted = is_baseline ? t.baseline : t.prediction;
            rep.iou_series.push_back(iou(predicted, t.ground_truth));
            PredictionResult counts;
            counts.v_p = count_occupied(predicted);
            counts.v_o = count_occupied(t.baseline);
            VpVo v = vp_vo(counts);
            rep.vp_vo_series.push_back(v.value);
            rep.vp_vo_defined.push_back(v.defined ? 1 : 0);
        }
        double acc = 0.0;
        for (double x : rep.iou_series) acc += x;
        rep.mean_iou = acc / static_cast<double>(rep.iou_series.size());
        return rep;
    };

    return {make_report(f_ss, false), make_report(f_bl, true)};
}

}  // namespace occudiff
