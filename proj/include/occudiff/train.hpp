#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "occudiff/model.hpp"
#include "occudiff/rng.hpp"
#include "occudiff/schedule.hpp"

namespace occudiff {

struct TrainConfig {
    int batch_size = 16;
    int epochs = 30;
    double dropout = 0.2;  // probability of replacing the conditioning by the null embedding
    int warmup_steps = 500;
    double lr_min = 1e-6;
    double lr_max = 1e-4;
    long total_steps = 0;  // 0: derived from the dataset by train_loop
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    uint64_t seed = 0;
    bool predict_x0 = false;  // default target is the injected noise

    void validate() const {
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
        if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
        if (!(dropout >= 0.0 && dropout < 1.0)) {
            throw std::invalid_argument("TrainConfig: dropout must be in [0, 1)");
        }
        if (warmup_steps < 0) throw std::invalid_argument("TrainConfig: warmup_steps must be >= 0");
        if (!(lr_min >= 0.0) || !(lr_max >= lr_min)) {
            throw std::invalid_argument("TrainConfig: need 0 <= lr_min <= lr_max");
        }
        if (total_steps < 0) throw std::invalid_argument("TrainConfig: total_steps must be >= 0");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
            throw std::invalid_argument("TrainConfig: betas must be in [0, 1)");
        }
        if (!(adam_eps > 0.0)) throw std::invalid_argument("TrainConfig: adam_eps must be > 0");
    }
};

/// Linear warmup lr_min -> lr_max over warmup_steps, then cosine decay back
/// to lr_min over the remaining steps.
inline double lr_at(long step, const TrainConfig& cfg) {
    if (step < cfg.warmup_steps) {
        return cfg.lr_min +
               (cfg.lr_max - cfg.lr_min) * static_cast<double>(step) / cfg.warmup_steps;
    }
    constexpr double kPi = 3.14159265358979323846;
    const long span = std::max<long>(1, cfg.total_steps - cfg.warmup_steps);
    double prog = static_cast<double>(step - cfg.warmup_steps) / static_cast<double>(span);
    prog = std::min(1.0, std::max(0.0, prog));
    return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(kPi * prog));
}

// ---------------------------------------------------------------------------

/// One training example: a target grid flattened to [-1, 1] and its
/// conditioning point cloud (already normalized to the region frame).
template <class S>
struct TrainSample {
    VecX<S> x0;
    MatX<S> cloud;  // 3 x n
    int id = -1;    // caller-assigned, quoted in abort diagnostics
};

/// FNV-1a over the raw target bytes: duplicate samples draw duplicate
/// per-sample randomness, which makes the batch loss invariant under
/// duplication and reordering. The cloud is deliberately excluded so that a
/// dropped sample's loss never depends on its conditioning in any way.
template <class S>
uint64_t sample_content_hash(const TrainSample<S>& s) {
    uint64_t h = 1469598103934665603ull;
    const auto* p = reinterpret_cast<const unsigned char*>(s.x0.data());
    const size_t n = sizeof(S) * static_cast<size_t>(s.x0.size());
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

/// Per-sample diffusion draws, fully determined by (base, sample content).
template <class S>
struct DrawnSample {
    int t = 1;
    bool use_null = false;
    VecX<S> eps;
    VecX<S> x_t;
};

template <class S>
DrawnSample<S> draw_sample(const TrainSample<S>& s, const NoiseSchedule& sched,
                           const TrainConfig& cfg, uint64_t base) {
    Rng rs(sub_seed(base, "train-sample", sample_content_hash(s)));
    DrawnSample<S> d;
    d.t = static_cast<int>(rs.uniform_int(1, sched.T));
    d.use_null = rs.uniform() < cfg.dropout;
    d.eps.resize(s.x0.size());
    rs.fill_normal(d.eps.data(), static_cast<size_t>(d.eps.size()));
    const S sa = static_cast<S>(std::sqrt(sched.alpha_bar(d.t)));
    const S sb = static_cast<S>(std::sqrt(1.0 - sched.alpha_bar(d.t)));
    d.x_t = sa * s.x0 + sb * d.eps;
    return d;
}

/// Batch loss with an injectable noise predictor (for oracle tests).
/// pred(x_t, t, eps, sample, use_null) -> prediction of the training target.
template <class S, class Pred>
double loss_with_predictor(const std::vector<TrainSample<S>>& batch, const NoiseSchedule& sched,
                           const TrainConfig& cfg, Rng& rng, Pred&& pred) {
    if (batch.empty()) throw std::invalid_argument("loss: batch must be nonempty");
    const uint64_t base = rng.next_u64();
    double total = 0.0;
    for (const TrainSample<S>& s : batch) {
        DrawnSample<S> d = draw_sample(s, sched, cfg, base);
        VecX<S> out = pred(d.x_t, d.t, d.eps, s, d.use_null);
        const VecX<S>& target = cfg.predict_x0 ? s.x0 : d.eps;
        total += static_cast<double>((out - target).squaredNorm()) /
                 static_cast<double>(s.x0.size());
    }
    return total / static_cast<double>(batch.size());
}

/// Loss of the model itself without gradients (checkpoint evaluation and
/// finite-difference probes). Deterministic given base.
template <class S>
double loss_value(const Denoiser<S>& model, const std::vector<TrainSample<S>>& batch,
                  const NoiseSchedule& sched, const TrainConfig& cfg, uint64_t base) {
    if (batch.empty()) throw std::invalid_argument("loss: batch must be nonempty");
    double total = 0.0;
    for (const TrainSample<S>& s : batch) {
        DrawnSample<S> d = draw_sample(s, sched, cfg, base);
        std::optional<VecX<S>> cond;
        if (!d.use_null && s.cloud.cols() > 0) cond = model.encode_points(s.cloud);
        VecX<S> out = model.predict(d.x_t, d.t, cond);
        const VecX<S>& target = cfg.predict_x0 ? s.x0 : d.eps;
        total += static_cast<double>((out - target).squaredNorm()) /
                 static_cast<double>(s.x0.size());
    }
    return total / static_cast<double>(batch.size());
}

/// Loss plus parameter gradients (zeroes the gradient vector first).
/// Per-sample randomness is keyed on sample content, so duplicated samples
/// contribute identical terms and the loss is a true batch mean.
template <class S>
double loss_and_grad(Denoiser<S>& model, const std::vector<TrainSample<S>>& batch,
                     const NoiseSchedule& sched, const TrainConfig& cfg, uint64_t base) {
    if (batch.empty()) throw std::invalid_argument("loss: batch must be nonempty");
    model.params().zero_grad();
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    UnetState<S> st;
    for (const TrainSample<S>& s : batch) {
        DrawnSample<S> d = draw_sample(s, sched, cfg, base);
        VecX<S> out = model.forward_train(d.x_t, d.t, &s.cloud, d.use_null, st);
        const VecX<S>& target = cfg.predict_x0 ? s.x0 : d.eps;
        VecX<S> diff = out - target;
        const double inv_n = 1.0 / static_cast<double>(s.x0.size());
        total += static_cast<double>(diff.squaredNorm()) * inv_n;
        VecX<S> dout = diff * static_cast<S>(2.0 * inv_n * inv_b);
        model.backward(dout, st);
    }
    return total * inv_b;
}

template <class S>
double loss(Denoiser<S>& model, const std::vector<TrainSample<S>>& batch,
            const NoiseSchedule& sched, const TrainConfig& cfg, Rng& rng) {
    return loss_and_grad(model, batch, sched, cfg, rng.next_u64());
}

// ---------------------------------------------------------------------------
// Adam-style optimizer; moments kept in double regardless of model scalar.

struct AdamState {
    VecX<double> m, v;
    long step = 0;

    void init(Eigen::Index n) {
        m = VecX<double>::Zero(n);
        v = VecX<double>::Zero(n);
        step = 0;
    }
};

template <class S>
void adam_step(ParamStore<S>& P, AdamState& st, double lr, const TrainConfig& cfg) {
    if (st.m.size() != P.size()) throw std::invalid_argument("adam_step: state size mismatch");
    st.step += 1;
    VecX<double> g = P.grad_vec().template cast<double>();
    st.m = cfg.beta1 * st.m + (1.0 - cfg.beta1) * g;
    st.v = cfg.beta2 * st.v + (1.0 - cfg.beta2) * g.array().square().matrix();
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
    VecX<double> update =
        (lr / bc1) * (st.m.array() / ((st.v.array() / bc2).sqrt() + cfg.adam_eps)).matrix();
    P.theta() -= update.template cast<S>();
}

/// One optimizer update on one batch. Randomness is derived from
/// (cfg.seed, global_step) alone, so resumed runs replay the identical
/// stream. Non-finite loss or gradient aborts with the offending batch ids.
template <class S>
double train_step(Denoiser<S>& model, const std::vector<TrainSample<S>>& batch,
                  const NoiseSchedule& sched, const TrainConfig& cfg, AdamState& adam,
                  long global_step) {
    const uint64_t base = sub_seed(cfg.seed, "train-step", static_cast<uint64_t>(global_step));
    const double l = loss_and_grad(model, batch, sched, cfg, base);
    if (!std::isfinite(l) || !model.params().grad_vec().allFinite()) {
        std::ostringstream msg;
        msg << "train_step: non-finite loss or gradient at step " << global_step
            << " (batch ids:";
        for (const TrainSample<S>& s : batch) msg << ' ' << s.id;
        msg << ")";
        throw std::runtime_error(msg.str());
    }
    adam_step(model.params(), adam, lr_at(global_step, cfg), cfg);
    return l;
}

inline long steps_per_epoch(size_t n_samples, int batch_size) {
    return static_cast<long>((n_samples + static_cast<size_t>(batch_size) - 1) /
                             static_cast<size_t>(batch_size));
}

/// Runs epochs [start_epoch, cfg.epochs): deterministic per-epoch shuffle,
/// sequential batches (last one may be partial), one train_step per batch.
/// Returns the mean loss of each completed epoch; on_step (if set) observes
/// every update for logging/checkpointing.
template <class S>
std::vector<double> train_loop(
    Denoiser<S>& model, const std::vector<TrainSample<S>>& data, const NoiseSchedule& sched,
    TrainConfig cfg, AdamState& adam, int start_epoch = 0,
    const std::function<void(int epoch, long global_step, double loss)>& on_step = {}) {
    cfg.validate();
    if (data.empty()) throw std::invalid_argument("train_loop: dataset must be nonempty");
    const long spe = steps_per_epoch(data.size(), cfg.batch_size);
    if (cfg.total_steps == 0) cfg.total_steps = spe * cfg.epochs;
    std::vector<double> epoch_losses;
    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        std::vector<size_t> order(data.size());
        std::iota(order.begin(), order.end(), size_t{0});
        Rng shuffle_rng(sub_seed(cfg.seed, "shuffle", static_cast<uint64_t>(epoch)));
        for (size_t i = order.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(shuffle_rng.uniform_int(0, static_cast<int64_t>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }
        double epoch_total = 0.0;
        for (long b = 0; b < spe; ++b) {
            std::vector<TrainSample<S>> batch;
            const size_t lo = static_cast<size_t>(b) * static_cast<size_t>(cfg.batch_size);
            const size_t hi = std::min(data.size(), lo + static_cast<size_t>(cfg.batch_size));
            batch.reserve(hi - lo);
            for (size_t i = lo; i < hi; ++i) batch.push_back(data[order[i]]);
            const long global_step = static_cast<long>(epoch) * spe + b;
            const double l = train_step(model, batch, sched, cfg, adam, global_step);
            epoch_total += l;
            if (on_step) on_step(epoch, global_step, l);
        }
        epoch_losses.push_back(epoch_total / static_cast<double>(spe));
    }
    return epoch_losses;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient verification.

struct GradCheckReport {
    double max_rel_err = 0.0;
    int checked = 0;
};

/// Central-difference probe of selected coordinates of theta against an
/// analytic gradient, h = h_scale * max(1, |theta_i|).
template <class S, class LossFn>
GradCheckReport finite_diff_probe(VecX<S>& theta, const VecX<S>& analytic, LossFn&& loss_fn,
                                  const std::vector<Eigen::Index>& idxs, double h_scale = 1e-5) {
    GradCheckReport rep;
    for (Eigen::Index i : idxs) {
        const S saved = theta[i];
        const double h = h_scale * std::max(1.0, std::abs(static_cast<double>(saved)));
        theta[i] = static_cast<S>(static_cast<double>(saved) + h);
        const double lp = loss_fn();
        theta[i] = static_cast<S>(static_cast<double>(saved) - h);
        const double lm = loss_fn();
        theta[i] = saved;
        const double num = (lp - lm) / (2.0 * h);
        const double ana = static_cast<double>(analytic[i]);
        const double rel = std::abs(ana - num) / std::max(std::abs(ana) + std::abs(num), 1e-8);
        rep.max_rel_err = std::max(rep.max_rel_err, rel);
        rep.checked += 1;
    }
    return rep;
}

/// Verifies the model's analytic gradient on a batch: >= min_probes
/// coordinates sampled round-robin across the tensor registry. The rng base
/// is advanced until the batch exercises both the conditioned and the null
/// path (unless dropout makes that impossible), so every parameter receives
/// gradient signal.
template <class S>
GradCheckReport grad_check(Denoiser<S>& model, const std::vector<TrainSample<S>>& batch,
                           const NoiseSchedule& sched, const TrainConfig& cfg,
                           uint64_t probe_seed, int min_probes = 200) {
    bool has_cloud = false;
    for (const TrainSample<S>& s : batch) has_cloud |= s.cloud.cols() > 0;
    uint64_t base = probe_seed;
    for (int trial = 0; trial < 1000; ++trial, ++base) {
        bool any_null = false, any_cond = false;
        for (const TrainSample<S>& s : batch) {
            DrawnSample<S> d = draw_sample(s, sched, cfg, base);
            (d.use_null || s.cloud.cols() == 0 ? any_null : any_cond) = true;
        }
        const bool want_cond = has_cloud && cfg.dropout < 1.0;
        const bool want_null = cfg.dropout > 0.0 || !has_cloud;
        if ((any_cond || !want_cond) && (any_null || !want_null)) break;
    }

    const double l0 = loss_and_grad(model, batch, sched, cfg, base);
    if (!std::isfinite(l0)) throw std::runtime_error("grad_check: non-finite loss");
    VecX<S> analytic = model.params().grad_vec();

    const auto& infos = model.params().infos();
    Rng pick(sub_seed(probe_seed, "grad-check-pick"));
    std::vector<Eigen::Index> idxs;
    const int probes = std::max<int>(min_probes, static_cast<int>(infos.size()));
    idxs.reserve(static_cast<size_t>(probes));
    for (int p = 0; p < probes; ++p) {
        const TensorInfo& info = infos[static_cast<size_t>(p) % infos.size()];
        const Eigen::Index n = info.rows * info.cols;
        idxs.push_back(info.offset + pick.uniform_int(0, n - 1));
    }

    auto loss_fn = [&]() { return loss_value(model, batch, sched, cfg, base); };
    return finite_diff_probe(model.params().theta(), analytic, loss_fn, idxs);
}

}  // namespace occudiff
