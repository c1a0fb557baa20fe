#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "occudiff/nn.hpp"
#include "occudiff/voxel_grid.hpp"

namespace occudiff {

/// Architecture hyperparameters for the conditional denoising U-net: two
/// resolution levels with skip connections, time via sinusoidal embedding and
/// per-channel bias, conditioning via FiLM scale/shift in every block.
struct UnetConfig {
    int dim = 16;  // cubic grid edge; one stride-2 stage, so must be even
    int width1 = 32;
    int width2 = 64;
    int time_dim = 64;
    int cond_dim = 64;
    int point_hidden = 64;
    int gn_groups = 8;
    int T = 1000;  // diffusion steps the model is trained against

    int groups_for(int channels) const {
        int g = std::min(gn_groups, channels);
        while (channels % g != 0) --g;
        return g;
    }

    void validate() const {
        if (dim < 4 || dim % 2 != 0) throw std::invalid_argument("UnetConfig: dim must be even, >= 4");
        if (width1 < 1 || width2 < 1) throw std::invalid_argument("UnetConfig: widths must be >= 1");
        if (time_dim < 2 || time_dim % 2 != 0) {
            throw std::invalid_argument("UnetConfig: time_dim must be even, >= 2");
        }
        if (cond_dim < 1 || point_hidden < 1) {
            throw std::invalid_argument("UnetConfig: conditioning dims must be >= 1");
        }
        if (gn_groups < 1) throw std::invalid_argument("UnetConfig: gn_groups must be >= 1");
        if (T < 1) throw std::invalid_argument("UnetConfig: T must be >= 1");
    }
};

template <class S>
VecX<S> sinusoidal_embedding(int t, int dim) {
    const int half = dim / 2;
    VecX<S> e(dim);
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
        e[i] = static_cast<S>(std::sin(t * freq));
        e[half + i] = static_cast<S>(std::cos(t * freq));
    }
    return e;
}

// ---------------------------------------------------------------------------
// Residual block: GN -> SiLU -> conv, +time bias, GN -> FiLM -> SiLU -> conv,
// plus a (projected) skip connection.

struct ResBlock {
    GroupNorm gn_a, gn_b;
    Conv3d conv_a, conv_b;
    Linear time_proj, film;
    ChannelLinear skip;
    bool projected_skip = false;
    int c_in = 0, c_out = 0, d = 0;

    template <class S>
    static ResBlock make(ParamStore<S>& P, const std::string& name, int c_in, int c_out, int d,
                         const UnetConfig& cfg) {
        ResBlock rb;
        rb.c_in = c_in;
        rb.c_out = c_out;
        rb.d = d;
        rb.gn_a = GroupNorm::make(P, name + ".norm1", c_in, cfg.groups_for(c_in));
        rb.conv_a = Conv3d::make(P, name + ".conv1", c_in, c_out, d, 1);
        rb.time_proj = Linear::make(P, name + ".time", cfg.time_dim, c_out);
        rb.film = Linear::make(P, name + ".film", cfg.cond_dim, 2 * c_out, /*zero_init=*/true);
        rb.gn_b = GroupNorm::make(P, name + ".norm2", c_out, cfg.groups_for(c_out));
        rb.conv_b = Conv3d::make(P, name + ".conv2", c_out, c_out, d, 1);
        if (c_in != c_out) {
            rb.skip = ChannelLinear::make(P, name + ".skip", c_in, c_out);
            rb.projected_skip = true;
        }
        return rb;
    }
};

template <class S>
struct ResBlockCtx {
    MatX<S> x;  // block input
    GroupNormCtx<S> gn_a;
    MatX<S> a;   // gn_a output, SiLU input
    MatX<S> b;   // conv_a input
    GroupNormCtx<S> gn_b;
    MatX<S> hn;  // gn_b output, FiLM input
    VecX<S> scale1;
    MatX<S> f;  // FiLM output, SiLU input
    MatX<S> q;  // conv_b input
};

template <class S>
MatX<S> resblock_forward(const ParamStore<S>& P, const ResBlock& rb, const MatX<S>& x,
                         const VecX<S>& temb, const VecX<S>& g, ResBlockCtx<S>* ctx) {
    MatX<S> a = groupnorm_forward(P, rb.gn_a, x, ctx ? &ctx->gn_a : nullptr);
    MatX<S> b = silu(a);
    MatX<S> h = conv3d_forward(P, rb.conv_a, b);
    h.colwise() += linear_forward(P, rb.time_proj, temb);
    MatX<S> hn = groupnorm_forward(P, rb.gn_b, h, ctx ? &ctx->gn_b : nullptr);
    VecX<S> st = linear_forward(P, rb.film, g);
    VecX<S> scale1 = VecX<S>::Ones(rb.c_out) + st.head(rb.c_out);
    MatX<S> f = scale1.asDiagonal() * hn;
    f.colwise() += st.tail(rb.c_out);
    MatX<S> q = silu(f);
    MatX<S> y = conv3d_forward(P, rb.conv_b, q);
    if (rb.projected_skip) {
        y += channel_linear_forward(P, rb.skip, x);
    } else {
        y += x;
    }
    if (ctx) {
        ctx->x = x;
        ctx->a = std::move(a);
        ctx->b = std::move(b);
        ctx->hn = std::move(hn);
        ctx->scale1 = std::move(scale1);
        ctx->f = std::move(f);
        ctx->q = std::move(q);
    }
    return y;
}

/// Accumulates parameter gradients plus the shared time/conditioning
/// gradients, and returns the gradient w.r.t. the block input.
template <class S>
MatX<S> resblock_backward(ParamStore<S>& P, const ResBlock& rb, const ResBlockCtx<S>& ctx,
                          const MatX<S>& dy, const VecX<S>& temb, const VecX<S>& g,
                          VecX<S>& dtemb, VecX<S>& dg) {
    MatX<S> dq = conv3d_backward(P, rb.conv_b, ctx.q, dy);
    MatX<S> df = silu_backward(ctx.f, dq);
    MatX<S> dhn = ctx.scale1.asDiagonal() * df;
    VecX<S> dst(2 * rb.c_out);
    dst.head(rb.c_out) = (df.array() * ctx.hn.array()).rowwise().sum().matrix();
    dst.tail(rb.c_out) = df.rowwise().sum();
    dg += linear_backward(P, rb.film, g, dst);
    MatX<S> dh = groupnorm_backward(P, rb.gn_b, ctx.gn_b, dhn);
    VecX<S> dtb = dh.rowwise().sum();
    dtemb += linear_backward(P, rb.time_proj, temb, dtb);
    MatX<S> db = conv3d_backward(P, rb.conv_a, ctx.b, dh);
    MatX<S> da = silu_backward(ctx.a, db);
    MatX<S> dx = groupnorm_backward(P, rb.gn_a, ctx.gn_a, da);
    if (rb.projected_skip) {
        dx += channel_linear_backward(P, rb.skip, ctx.x, dy);
    } else {
        dx += dy;
    }
    return dx;
}

// ---------------------------------------------------------------------------

template <class S>
struct UnetState {
    // time path
    VecX<S> temb0, t1pre, t1, temb;
    // conditioning path
    bool used_cloud = false;
    MatX<S> pts, a1, z1, a2, z2, a3;
    std::vector<Eigen::Index> argmax;
    VecX<S> g;
    // backbone
    MatX<S> x_in, e1, u1;
    ResBlockCtx<S> rb1, rb2, rb3, rb4, rb5;
    GroupNormCtx<S> gn_out;
    MatX<S> on, os;
};

/// The noise-prediction network f(x_t, t, cond): a two-level conditional 3D
/// U-net plus a permutation-invariant point-cloud encoder with a learned null
/// embedding for the unconditional branch. Inference methods are const and
/// touch no shared state, so they are safe to call concurrently.
template <class S>
class Denoiser {
  public:
    explicit Denoiser(UnetConfig cfg) : cfg_(cfg) {
        cfg_.validate();
        const int d = cfg_.dim, w1 = cfg_.width1, w2 = cfg_.width2;
        stem_ = Conv3d::make(P_, "stem", 1, w1, d, 1);
        rb1_ = ResBlock::make(P_, "enc1", w1, w1, d, cfg_);
        down_ = Conv3d::make(P_, "down", w1, w2, d, 2);
        rb2_ = ResBlock::make(P_, "enc2", w2, w2, d / 2, cfg_);
        rb3_ = ResBlock::make(P_, "mid", w2, w2, d / 2, cfg_);
        rb4_ = ResBlock::make(P_, "dec2", 2 * w2, w2, d / 2, cfg_);
        up_ = Conv3d::make(P_, "up", w2, w1, d, 1);
        rb5_ = ResBlock::make(P_, "dec1", 2 * w1, w1, d, cfg_);
        gn_out_ = GroupNorm::make(P_, "out.norm", w1, cfg_.groups_for(w1));
        out_ = Conv3d::make(P_, "out.conv", w1, 1, d, 1, /*zero_init=*/true);
        tmlp1_ = Linear::make(P_, "time.fc1", cfg_.time_dim, cfg_.time_dim);
        tmlp2_ = Linear::make(P_, "time.fc2", cfg_.time_dim, cfg_.time_dim);
        p1_ = Linear::make(P_, "points.fc1", 3, cfg_.point_hidden);
        p2_ = Linear::make(P_, "points.fc2", cfg_.point_hidden, cfg_.point_hidden);
        p3_ = Linear::make(P_, "points.fc3", cfg_.point_hidden, cfg_.cond_dim);
        null_ = P_.add("points.null", cfg_.cond_dim, 1, std::sqrt(1.0 / cfg_.cond_dim));
        P_.allocate();
    }

    const UnetConfig& config() const { return cfg_; }
    ParamStore<S>& params() { return P_; }
    const ParamStore<S>& params() const { return P_; }
    Eigen::Index param_count() const { return P_.size(); }
    Eigen::Index cell_count() const {
        return static_cast<Eigen::Index>(cfg_.dim) * cfg_.dim * cfg_.dim;
    }

    void init_params(uint64_t seed) { P_.init(seed); }

    VecX<S> null_embedding() const { return P_.mat(null_).col(0); }

    /// Per-point MLP then a coordinatewise max over points; the empty cloud
    /// maps to the learned null embedding.
    VecX<S> encode_points(const MatX<S>& pts) const {
        if (pts.cols() == 0) return null_embedding();
        if (pts.rows() != 3) throw std::invalid_argument("encode_points: points must be 3 x n");
        if (!pts.allFinite()) throw std::invalid_argument("encode_points: non-finite point");
        MatX<S> z1 = silu(linear_forward_cols(P_, p1_, pts));
        MatX<S> z2 = silu(linear_forward_cols(P_, p2_, z1));
        MatX<S> a3 = linear_forward_cols(P_, p3_, z2);
        return a3.rowwise().maxCoeff();
    }

    /// Noise prediction for one grid (flattened, x fastest). cond is an
    /// already-encoded conditioning vector; nullopt selects the null
    /// embedding (the classifier-free unconditional branch).
    VecX<S> predict(const VecX<S>& x, int t, const std::optional<VecX<S>>& cond) const {
        check_inputs(x, t, cond);
        VecX<S> g = cond ? *cond : null_embedding();
        VecX<S> temb = time_embedding(t, nullptr);
        return run(x, temb, g, nullptr);
    }

    /// Training forward: caches every intermediate needed by backward().
    /// cloud may be null/empty or dropped (use_null) for classifier-free
    /// training; gradients then flow to the null embedding instead.
    VecX<S> forward_train(const VecX<S>& x, int t, const MatX<S>* cloud, bool use_null,
                          UnetState<S>& st) {
        check_inputs(x, t, std::nullopt);
        st.temb = time_embedding(t, &st);
        st.used_cloud = !use_null && cloud != nullptr && cloud->cols() > 0;
        if (st.used_cloud) {
            if (cloud->rows() != 3) throw std::invalid_argument("forward_train: bad cloud shape");
            if (!cloud->allFinite()) throw std::invalid_argument("forward_train: non-finite point");
            st.pts = *cloud;
            st.a1 = linear_forward_cols(P_, p1_, st.pts);
            st.z1 = silu(st.a1);
            st.a2 = linear_forward_cols(P_, p2_, st.z1);
            st.z2 = silu(st.a2);
            st.a3 = linear_forward_cols(P_, p3_, st.z2);
            st.g.resize(cfg_.cond_dim);
            st.argmax.assign(static_cast<size_t>(cfg_.cond_dim), 0);
            for (int f = 0; f < cfg_.cond_dim; ++f) {
                Eigen::Index best = 0;
                st.g[f] = st.a3.row(f).maxCoeff(&best);
                st.argmax[static_cast<size_t>(f)] = best;
            }
        } else {
            st.g = null_embedding();
        }
        return run(x, st.temb, st.g, &st);
    }

    /// Backward pass for the latest forward_train call; accumulates into the
    /// parameter gradient vector.
    void backward(const VecX<S>& dout, UnetState<S>& st) {
        const int w1 = cfg_.width1, w2 = cfg_.width2, d = cfg_.dim;
        VecX<S> dtemb = VecX<S>::Zero(cfg_.time_dim);
        VecX<S> dg = VecX<S>::Zero(cfg_.cond_dim);

        Eigen::Map<const MatX<S>> dout_map(dout.data(), 1, dout.size());
        MatX<S> dos = conv3d_backward(P_, out_, st.os, MatX<S>(dout_map));
        MatX<S> don = silu_backward(st.on, dos);
        MatX<S> dr1 = groupnorm_backward(P_, gn_out_, st.gn_out, don);
        MatX<S> dc1 = resblock_backward(P_, rb5_, st.rb5, dr1, st.temb, st.g, dtemb, dg);
        MatX<S> du1 = conv3d_backward(P_, up_, st.u1, MatX<S>(dc1.topRows(w1)));
        MatX<S> dr2 = upsample2_backward(du1, d / 2);
        MatX<S> dc2 = resblock_backward(P_, rb4_, st.rb4, dr2, st.temb, st.g, dtemb, dg);
        MatX<S> de2 = resblock_backward(P_, rb3_, st.rb3, MatX<S>(dc2.topRows(w2)), st.temb, st.g,
                                        dtemb, dg);
        de2 += dc2.bottomRows(w2);
        MatX<S> dd1 = resblock_backward(P_, rb2_, st.rb2, de2, st.temb, st.g, dtemb, dg);
        MatX<S> de1 = conv3d_backward(P_, down_, st.e1, dd1);
        de1 += dc1.bottomRows(w1);
        MatX<S> dh0 = resblock_backward(P_, rb1_, st.rb1, de1, st.temb, st.g, dtemb, dg);
        conv3d_backward(P_, stem_, st.x_in, dh0);

        // Shared time MLP.
        VecX<S> dt1 = linear_backward(P_, tmlp2_, st.t1, dtemb);
        VecX<S> dt1pre = silu_backward(st.t1pre, dt1);
        linear_backward(P_, tmlp1_, st.temb0, dt1pre);

        // Conditioning: route through the point encoder or the null embedding.
        if (st.used_cloud) {
            MatX<S> da3 = MatX<S>::Zero(cfg_.cond_dim, st.pts.cols());
            for (int f = 0; f < cfg_.cond_dim; ++f) {
                da3(f, st.argmax[static_cast<size_t>(f)]) += dg[f];
            }
            MatX<S> dz2 = linear_backward_cols(P_, p3_, st.z2, da3);
            MatX<S> da2 = silu_backward(st.a2, dz2);
            MatX<S> dz1 = linear_backward_cols(P_, p2_, st.z1, da2);
            MatX<S> da1 = silu_backward(st.a1, dz1);
            linear_backward_cols(P_, p1_, st.pts, da1);
        } else {
            P_.grad(null_).col(0) += dg;
        }
    }

  private:
    void check_inputs(const VecX<S>& x, int t, const std::optional<VecX<S>>& cond) const {
        if (x.size() != cell_count()) {
            throw std::invalid_argument("predict: grid size does not match model dims");
        }
        if (t < 1 || t > cfg_.T) throw std::invalid_argument("predict: t outside [1, T]");
        if (cond && cond->size() != cfg_.cond_dim) {
            throw std::invalid_argument("predict: conditioning vector has wrong dimension");
        }
    }

    VecX<S> time_embedding(int t, UnetState<S>* st) const {
        VecX<S> temb0 = sinusoidal_embedding<S>(t, cfg_.time_dim);
        VecX<S> t1pre = linear_forward(P_, tmlp1_, temb0);
        VecX<S> t1 = silu(t1pre);
        VecX<S> temb = linear_forward(P_, tmlp2_, t1);
        if (st) {
            st->temb0 = std::move(temb0);
            st->t1pre = std::move(t1pre);
            st->t1 = std::move(t1);
        }
        return temb;
    }

    VecX<S> run(const VecX<S>& x, const VecX<S>& temb, const VecX<S>& g, UnetState<S>* st) const {
        const int w1 = cfg_.width1, w2 = cfg_.width2, d = cfg_.dim;
        Eigen::Map<const MatX<S>> x_map(x.data(), 1, x.size());
        MatX<S> x_in(x_map);
        MatX<S> h0 = conv3d_forward(P_, stem_, x_in);
        MatX<S> e1 = resblock_forward(P_, rb1_, h0, temb, g, st ? &st->rb1 : nullptr);
        MatX<S> d1 = conv3d_forward(P_, down_, e1);
        MatX<S> e2 = resblock_forward(P_, rb2_, d1, temb, g, st ? &st->rb2 : nullptr);
        MatX<S> m = resblock_forward(P_, rb3_, e2, temb, g, st ? &st->rb3 : nullptr);
        MatX<S> c2(2 * w2, m.cols());
        c2.topRows(w2) = m;
        c2.bottomRows(w2) = e2;
        MatX<S> r2 = resblock_forward(P_, rb4_, c2, temb, g, st ? &st->rb4 : nullptr);
        MatX<S> u1 = upsample2(r2, d / 2);
        MatX<S> u2 = conv3d_forward(P_, up_, u1);
        MatX<S> c1(2 * w1, u2.cols());
        c1.topRows(w1) = u2;
        c1.bottomRows(w1) = e1;
        MatX<S> r1 = resblock_forward(P_, rb5_, c1, temb, g, st ? &st->rb5 : nullptr);
        MatX<S> on = groupnorm_forward(P_, gn_out_, r1, st ? &st->gn_out : nullptr);
        MatX<S> os = silu(on);
        MatX<S> out = conv3d_forward(P_, out_, os);
        if (st) {
            st->x_in = std::move(x_in);
            st->e1 = std::move(e1);
            st->u1 = std::move(u1);
            st->on = std::move(on);
            st->os = std::move(os);
        }
        return Eigen::Map<const VecX<S>>(out.data(), out.size());
    }

    UnetConfig cfg_;
    ParamStore<S> P_;
    Conv3d stem_, down_, up_, out_;
    ResBlock rb1_, rb2_, rb3_, rb4_, rb5_;
    GroupNorm gn_out_;
    Linear tmlp1_, tmlp2_, p1_, p2_, p3_;
    TensorRef null_;
};

/// Float-grid convenience wrapper matching the VoxelGrid world.
template <class S>
VoxelGrid predict_noise_grid(const Denoiser<S>& net, const VoxelGrid& x_t, int t,
                             const std::optional<VecX<S>>& cond) {
    const int d = net.config().dim;
    if (x_t.dims() != IVec3(d, d, d)) {
        throw std::invalid_argument("predict_noise: grid dims do not match model dims");
    }
    VecX<S> x(x_t.cell_count());
    for (size_t i = 0; i < x_t.cell_count(); ++i) x[static_cast<Eigen::Index>(i)] = static_cast<S>(x_t.values()[i]);
    VecX<S> out = net.predict(x, t, cond);
    VoxelGrid result(x_t.dims(), x_t.voxel_size(), x_t.origin());
    for (size_t i = 0; i < result.cell_count(); ++i) {
        result.values()[i] = static_cast<float>(out[static_cast<Eigen::Index>(i)]);
    }
    return result;
}

}  // namespace occudiff
