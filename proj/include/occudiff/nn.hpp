#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "occudiff/rng.hpp"

namespace occudiff {

template <class S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// Window into the flat parameter/gradient vectors of a ParamStore.
struct TensorRef {
    Eigen::Index offset = 0;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    Eigen::Index size() const { return rows * cols; }
};

struct TensorInfo {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    Eigen::Index offset = 0;
    double init_std = 0.0;    // > 0: normal init with this std
    double init_const = 0.0;  // used when init_std == 0
};

/// All trainable parameters in one flat vector (plus a matching gradient
/// vector), with a named registry that fixes serialization order and lets the
/// optimizer and finite-difference checks treat the model as a single theta.
template <class S>
class ParamStore {
  public:
    TensorRef add(std::string name, Eigen::Index rows, Eigen::Index cols, double init_std,
                  double init_const = 0.0) {
        TensorRef ref{total_, rows, cols};
        infos_.push_back({std::move(name), rows, cols, total_, init_std, init_const});
        total_ += rows * cols;
        return ref;
    }

    void allocate() {
        theta_ = VecX<S>::Zero(total_);
        grad_ = VecX<S>::Zero(total_);
    }

    /// Fills every tensor in registry order from one serial stream.
    void init(uint64_t seed) {
        Rng rng(seed);
        for (const TensorInfo& info : infos_) {
            S* p = theta_.data() + info.offset;
            Eigen::Index n = info.rows * info.cols;
            if (info.init_std > 0.0) {
                for (Eigen::Index i = 0; i < n; ++i) {
                    p[i] = static_cast<S>(rng.normal() * info.init_std);
                }
            } else {
                for (Eigen::Index i = 0; i < n; ++i) p[i] = static_cast<S>(info.init_const);
            }
        }
    }

    Eigen::Map<MatX<S>> mat(const TensorRef& r) {
        return Eigen::Map<MatX<S>>(theta_.data() + r.offset, r.rows, r.cols);
    }
    Eigen::Map<const MatX<S>> mat(const TensorRef& r) const {
        return Eigen::Map<const MatX<S>>(theta_.data() + r.offset, r.rows, r.cols);
    }
    Eigen::Map<MatX<S>> grad(const TensorRef& r) {
        return Eigen::Map<MatX<S>>(grad_.data() + r.offset, r.rows, r.cols);
    }

    VecX<S>& theta() { return theta_; }
    const VecX<S>& theta() const { return theta_; }
    VecX<S>& grad_vec() { return grad_; }
    const VecX<S>& grad_vec() const { return grad_; }
    void zero_grad() { grad_.setZero(); }

    Eigen::Index size() const { return total_; }
    const std::vector<TensorInfo>& infos() const { return infos_; }

  private:
    std::vector<TensorInfo> infos_;
    Eigen::Index total_ = 0;
    VecX<S> theta_;
    VecX<S> grad_;
};

// ---------------------------------------------------------------------------
// 3x3x3 convolution on cubic grids, channels-by-voxels layout (C x D^3,
// x fastest), zero padding 1, stride 1 or 2, via im2col + GEMM.

struct Conv3d {
    TensorRef W;  // c_out x (27 * c_in), column k = tap * c_in + c
    TensorRef b;  // c_out x 1
    int c_in = 0, c_out = 0, d_in = 0, stride = 1;

    int d_out() const { return stride == 1 ? d_in : d_in / 2; }

    template <class S>
    static Conv3d make(ParamStore<S>& P, const std::string& name, int c_in, int c_out, int d_in,
                       int stride, bool zero_init = false) {
        Conv3d L;
        L.c_in = c_in;
        L.c_out = c_out;
        L.d_in = d_in;
        L.stride = stride;
        double std = zero_init ? 0.0 : std::sqrt(2.0 / (27.0 * c_in));
        L.W = P.add(name + ".W", c_out, 27 * static_cast<Eigen::Index>(c_in), std);
        L.b = P.add(name + ".b", c_out, 1, 0.0);
        return L;
    }
};

template <class S>
void im2col(const MatX<S>& x, int c, int d, int stride, MatX<S>& cols) {
    const int dout = stride == 1 ? d : d / 2;
    cols.setZero(27 * static_cast<Eigen::Index>(c),
                 static_cast<Eigen::Index>(dout) * dout * dout);
    for (int oz = 0; oz < dout; ++oz) {
        for (int oy = 0; oy < dout; ++oy) {
            for (int ox = 0; ox < dout; ++ox) {
                const Eigen::Index n =
                    ox + static_cast<Eigen::Index>(dout) * (oy + static_cast<Eigen::Index>(dout) * oz);
                for (int tap = 0; tap < 27; ++tap) {
                    const int iz = oz * stride + tap / 9 - 1;
                    const int iy = oy * stride + (tap / 3) % 3 - 1;
                    const int ix = ox * stride + tap % 3 - 1;
                    if (ix < 0 || ix >= d || iy < 0 || iy >= d || iz < 0 || iz >= d) continue;
                    const Eigen::Index m =
                        ix + static_cast<Eigen::Index>(d) * (iy + static_cast<Eigen::Index>(d) * iz);
                    cols.block(static_cast<Eigen::Index>(tap) * c, n, c, 1) = x.col(m);
                }
            }
        }
    }
}

/// Adjoint of im2col: scatter-adds column gradients back onto the input grid.
template <class S>
void col2im_add(const MatX<S>& dcols, int c, int d, int stride, MatX<S>& dx) {
    const int dout = stride == 1 ? d : d / 2;
    for (int oz = 0; oz < dout; ++oz) {
        for (int oy = 0; oy < dout; ++oy) {
            for (int ox = 0; ox < dout; ++ox) {
                const Eigen::Index n =
                    ox + static_cast<Eigen::Index>(dout) * (oy + static_cast<Eigen::Index>(dout) * oz);
                for (int tap = 0; tap < 27; ++tap) {
                    const int iz = oz * stride + tap / 9 - 1;
                    const int iy = oy * stride + (tap / 3) % 3 - 1;
                    const int ix = ox * stride + tap % 3 - 1;
                    if (ix < 0 || ix >= d || iy < 0 || iy >= d || iz < 0 || iz >= d) continue;
                    const Eigen::Index m =
                        ix + static_cast<Eigen::Index>(d) * (iy + static_cast<Eigen::Index>(d) * iz);
                    dx.col(m) += dcols.block(static_cast<Eigen::Index>(tap) * c, n, c, 1);
                }
            }
        }
    }
}

template <class S>
MatX<S> conv3d_forward(const ParamStore<S>& P, const Conv3d& L, const MatX<S>& x) {
    MatX<S> cols;
    im2col(x, L.c_in, L.d_in, L.stride, cols);
    MatX<S> y = P.mat(L.W) * cols;
    y.colwise() += P.mat(L.b).col(0);
    return y;
}

/// Backward from the saved layer input; accumulates parameter gradients and
/// returns the input gradient.
template <class S>
MatX<S> conv3d_backward(ParamStore<S>& P, const Conv3d& L, const MatX<S>& x_saved,
                        const MatX<S>& dout) {
    MatX<S> cols;
    im2col(x_saved, L.c_in, L.d_in, L.stride, cols);
    P.grad(L.W).noalias() += dout * cols.transpose();
    P.grad(L.b).col(0) += dout.rowwise().sum();
    MatX<S> dcols = P.mat(L.W).transpose() * dout;
    MatX<S> dx = MatX<S>::Zero(x_saved.rows(), x_saved.cols());
    col2im_add(dcols, L.c_in, L.d_in, L.stride, dx);
    return dx;
}

// ---------------------------------------------------------------------------
// 1x1 channel mixing (residual skip projection).

struct ChannelLinear {
    TensorRef W;  // c_out x c_in
    TensorRef b;  // c_out x 1
    int c_in = 0, c_out = 0;

    template <class S>
    static ChannelLinear make(ParamStore<S>& P, const std::string& name, int c_in, int c_out) {
        ChannelLinear L;
        L.c_in = c_in;
        L.c_out = c_out;
        L.W = P.add(name + ".W", c_out, c_in, std::sqrt(1.0 / c_in));
        L.b = P.add(name + ".b", c_out, 1, 0.0);
        return L;
    }
};

template <class S>
MatX<S> channel_linear_forward(const ParamStore<S>& P, const ChannelLinear& L, const MatX<S>& x) {
    MatX<S> y = P.mat(L.W) * x;
    y.colwise() += P.mat(L.b).col(0);
    return y;
}

template <class S>
MatX<S> channel_linear_backward(ParamStore<S>& P, const ChannelLinear& L, const MatX<S>& x_saved,
                                const MatX<S>& dout) {
    P.grad(L.W).noalias() += dout * x_saved.transpose();
    P.grad(L.b).col(0) += dout.rowwise().sum();
    return P.mat(L.W).transpose() * dout;
}

// ---------------------------------------------------------------------------
// Group normalization over (channels/group x voxels) blocks of one sample.

struct GroupNorm {
    TensorRef gamma;  // c x 1
    TensorRef beta;   // c x 1
    int c = 0, groups = 1;

    template <class S>
    static GroupNorm make(ParamStore<S>& P, const std::string& name, int c, int groups) {
        if (c % groups != 0) throw std::invalid_argument("GroupNorm: channels not divisible");
        GroupNorm L;
        L.c = c;
        L.groups = groups;
        L.gamma = P.add(name + ".gamma", c, 1, 0.0, 1.0);
        L.beta = P.add(name + ".beta", c, 1, 0.0);
        return L;
    }
};

template <class S>
struct GroupNormCtx {
    MatX<S> xhat;
    VecX<S> inv_std;  // per group
};

template <class S>
MatX<S> groupnorm_forward(const ParamStore<S>& P, const GroupNorm& L, const MatX<S>& x,
                          GroupNormCtx<S>* ctx) {
    constexpr double kEps = 1e-5;
    const int cg = L.c / L.groups;
    MatX<S> xhat(x.rows(), x.cols());
    VecX<S> inv_std(L.groups);
    for (int g = 0; g < L.groups; ++g) {
        auto block = x.middleRows(static_cast<Eigen::Index>(g) * cg, cg);
        const S mu = block.mean();
        const S var = (block.array() - mu).square().mean();
        const S inv = S(1) / std::sqrt(var + static_cast<S>(kEps));
        xhat.middleRows(static_cast<Eigen::Index>(g) * cg, cg) = (block.array() - mu) * inv;
        inv_std[g] = inv;
    }
    MatX<S> y = P.mat(L.gamma).col(0).asDiagonal() * xhat;
    y.colwise() += P.mat(L.beta).col(0);
    if (ctx) {
        ctx->xhat = std::move(xhat);
        ctx->inv_std = std::move(inv_std);
    }
    return y;
}

template <class S>
MatX<S> groupnorm_backward(ParamStore<S>& P, const GroupNorm& L, const GroupNormCtx<S>& ctx,
                           const MatX<S>& dy) {
    const int cg = L.c / L.groups;
    P.grad(L.gamma).col(0) += (dy.array() * ctx.xhat.array()).rowwise().sum().matrix();
    P.grad(L.beta).col(0) += dy.rowwise().sum();
    MatX<S> dxhat = P.mat(L.gamma).col(0).asDiagonal() * dy;
    MatX<S> dx(dy.rows(), dy.cols());
    for (int g = 0; g < L.groups; ++g) {
        auto dxh = dxhat.middleRows(static_cast<Eigen::Index>(g) * cg, cg);
        auto xh = ctx.xhat.middleRows(static_cast<Eigen::Index>(g) * cg, cg);
        const S m = static_cast<S>(dxh.size());
        const S sum_d = dxh.sum();
        const S sum_dx = (dxh.array() * xh.array()).sum();
        dx.middleRows(static_cast<Eigen::Index>(g) * cg, cg) =
            (ctx.inv_std[g] / m) * (m * dxh.array() - sum_d - xh.array() * sum_dx).matrix();
    }
    return dx;
}

// ---------------------------------------------------------------------------
// SiLU x * sigmoid(x), elementwise.

template <class D>
typename D::PlainObject silu(const Eigen::MatrixBase<D>& x) {
    using S = typename D::Scalar;
    return (x.array() / (S(1) + (-x.array()).exp())).matrix();
}

template <class D1, class D2>
typename D1::PlainObject silu_backward(const Eigen::MatrixBase<D1>& x_saved,
                                       const Eigen::MatrixBase<D2>& dy) {
    using S = typename D1::Scalar;
    auto sig = S(1) / (S(1) + (-x_saved.array()).exp());
    return (dy.array() * sig * (S(1) + x_saved.array() * (S(1) - sig))).matrix();
}

// ---------------------------------------------------------------------------
// Dense layer on single vectors.

struct Linear {
    TensorRef W;  // out x in
    TensorRef b;  // out x 1
    int in = 0, out = 0;

    template <class S>
    static Linear make(ParamStore<S>& P, const std::string& name, int in, int out,
                       bool zero_init = false) {
        Linear L;
        L.in = in;
        L.out = out;
        L.W = P.add(name + ".W", out, in, zero_init ? 0.0 : std::sqrt(1.0 / in));
        L.b = P.add(name + ".b", out, 1, 0.0);
        return L;
    }
};

template <class S>
VecX<S> linear_forward(const ParamStore<S>& P, const Linear& L, const VecX<S>& x) {
    return P.mat(L.W) * x + P.mat(L.b).col(0);
}

template <class S>
VecX<S> linear_backward(ParamStore<S>& P, const Linear& L, const VecX<S>& x_saved,
                        const VecX<S>& dy) {
    P.grad(L.W).noalias() += dy * x_saved.transpose();
    P.grad(L.b).col(0) += dy;
    return P.mat(L.W).transpose() * dy;
}

/// Matrix variant: columns are independent inputs (point clouds).
template <class S>
MatX<S> linear_forward_cols(const ParamStore<S>& P, const Linear& L, const MatX<S>& x) {
    MatX<S> y = P.mat(L.W) * x;
    y.colwise() += P.mat(L.b).col(0);
    return y;
}

template <class S>
MatX<S> linear_backward_cols(ParamStore<S>& P, const Linear& L, const MatX<S>& x_saved,
                             const MatX<S>& dy) {
    P.grad(L.W).noalias() += dy * x_saved.transpose();
    P.grad(L.b).col(0) += dy.rowwise().sum();
    return P.mat(L.W).transpose() * dy;
}

// ---------------------------------------------------------------------------
// Nearest-neighbour 2x upsampling on cubic grids.

template <class S>
MatX<S> upsample2(const MatX<S>& x, int d_in) {
    const int d = d_in * 2;
    MatX<S> y(x.rows(), static_cast<Eigen::Index>(d) * d * d);
    for (int z = 0; z < d; ++z) {
        for (int yy = 0; yy < d; ++yy) {
            for (int xx = 0; xx < d; ++xx) {
                const Eigen::Index n =
                    xx + static_cast<Eigen::Index>(d) * (yy + static_cast<Eigen::Index>(d) * z);
                const Eigen::Index m =
                    (xx / 2) + static_cast<Eigen::Index>(d_in) *
                                   ((yy / 2) + static_cast<Eigen::Index>(d_in) * (z / 2));
                y.col(n) = x.col(m);
            }
        }
    }
    return y;
}

template <class S>
MatX<S> upsample2_backward(const MatX<S>& dy, int d_in) {
    const int d = d_in * 2;
    MatX<S> dx = MatX<S>::Zero(dy.rows(), static_cast<Eigen::Index>(d_in) * d_in * d_in);
    for (int z = 0; z < d; ++z) {
        for (int yy = 0; yy < d; ++yy) {
            for (int xx = 0; xx < d; ++xx) {
                const Eigen::Index n =
                    xx + static_cast<Eigen::Index>(d) * (yy + static_cast<Eigen::Index>(d) * z);
                const Eigen::Index m =
                    (xx / 2) + static_cast<Eigen::Index>(d_in) *
                                   ((yy / 2) + static_cast<Eigen::Index>(d_in) * (z / 2));
                dx.col(m) += dy.col(n);
            }
        }
    }
    return dx;
}

}  // namespace occudiff
