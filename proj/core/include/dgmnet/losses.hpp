#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "dgmnet/errors.hpp"
#include "dgmnet/landmarks.hpp"

namespace dgmnet {

struct LossConfig {
    double lambda = 1.0;         // weight of the joint classification/landmark term
    double dice_epsilon = 1e-6;

    void validate() const {
        if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("loss.lambda must be >= 0");
        if (!(dice_epsilon > 0.0)) throw ValidationError("loss.dice_epsilon must be > 0");
    }
};

/// total = mask + lambda * (cls + lnd), mask = dice + ce.
struct LossBreakdown {
    double total = 0.0;
    double mask = 0.0;
    double dice = 0.0;
    double ce = 0.0;
    double cls = 0.0;
    double lnd = 0.0;
};

/// Probabilities are clipped to [kProbClip, 1 - kProbClip] before taking logs.
inline constexpr double kProbClip = 1e-7;

template <std::floating_point T>
T smooth_l1(T d) {
    const T a = std::abs(d);
    return a < T(1) ? T(0.5) * d * d : a - T(0.5);
}

template <std::floating_point T>
T smooth_l1_grad(T d) {
    if (std::abs(d) < T(1)) return d;
    return d > T(0) ? T(1) : T(-1);
}

/// Mean binary cross-entropy over all entries. Writes d loss / d p into `grad` when non-empty.
template <std::floating_point T>
T binary_cross_entropy(std::span<const T> p, std::span<const T> z, std::span<T> grad = {}) {
    if (p.size() != z.size()) throw ValidationError("binary_cross_entropy: size mismatch");
    if (p.empty()) return T(0);
    const T lo = T(kProbClip), hi = T(1) - T(kProbClip);
    const T inv_n = T(1) / static_cast<T>(p.size());
    T sum = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const T pc = std::clamp(p[i], lo, hi);
        sum -= z[i] * std::log(pc) + (T(1) - z[i]) * std::log(T(1) - pc);
        if (!grad.empty()) {
            const bool inside = p[i] > lo && p[i] < hi;
            grad[i] = inside ? inv_n * (-z[i] / pc + (T(1) - z[i]) / (T(1) - pc)) : T(0);
        }
    }
    return sum * inv_n;
}

/// Presence classification loss: mean binary cross-entropy of p against z.
template <std::floating_point T>
T cls_loss(std::span<const T> p_pred, std::span<const T> z_true, std::span<T> grad = {}) {
    return binary_cross_entropy(p_pred, z_true, grad);
}

/// Soft Dice loss per sample, averaged over the batch. `pred` and `target` hold `batch`
/// equally sized samples back to back.
template <std::floating_point T>
T dice_loss(std::span<const T> pred, std::span<const T> target, std::size_t batch, T eps,
            std::span<T> grad = {}) {
    if (pred.size() != target.size()) throw ValidationError("dice_loss: size mismatch");
    if (batch == 0 || pred.size() % batch != 0) throw ValidationError("dice_loss: bad batch size");
    const std::size_t per = pred.size() / batch;
    T total = 0;
    for (std::size_t n = 0; n < batch; ++n) {
        const std::size_t off = n * per;
        T inter = 0, sp = 0, st = 0;
        for (std::size_t i = 0; i < per; ++i) {
            inter += pred[off + i] * target[off + i];
            sp += pred[off + i];
            st += target[off + i];
        }
        const T num = T(2) * inter + eps;
        const T den = sp + st + eps;
        total += T(1) - num / den;
        if (!grad.empty()) {
            const T scale = T(1) / (static_cast<T>(batch) * den * den);
            for (std::size_t i = 0; i < per; ++i) {
                grad[off + i] = -(T(2) * target[off + i] * den - num) * scale;
            }
        }
    }
    return total / static_cast<T>(batch);
}

/// Smooth-L1 over landmark coordinates of present slices, divided by the batch size.
/// `t_true`/`t_pred` hold 8 coordinates per slice; `z_true` one presence flag per slice.
template <std::floating_point T>
T landmark_loss(std::span<const T> t_true, std::span<const T> t_pred, std::span<const T> z_true,
                std::size_t batch, std::span<T> grad = {}) {
    if (t_true.size() != t_pred.size() || t_true.size() != z_true.size() * 8) {
        throw ValidationError("landmark_loss: shape mismatch");
    }
    if (batch == 0) throw ValidationError("landmark_loss: batch must be positive");
    const T inv_b = T(1) / static_cast<T>(batch);
    T sum = 0;
    for (std::size_t s = 0; s < z_true.size(); ++s) {
        const bool present = z_true[s] == T(1);
        for (std::size_t k = 0; k < 8; ++k) {
            const std::size_t i = s * 8 + k;
            if (present) sum += smooth_l1(t_true[i] - t_pred[i]);
            if (!grad.empty()) grad[i] = present ? -smooth_l1_grad(t_true[i] - t_pred[i]) * inv_b : T(0);
        }
    }
    return sum * inv_b;
}

template <std::floating_point T>
struct LossResult {
    LossBreakdown breakdown;
    std::vector<T> mask_grad;      // d total / d pred_mask
    std::vector<T> landmark_grad;  // d total / d landmark_pred (empty without landmarks)
};

/// Landmark predictions and targets in the encoded per-slice layout
/// [z, xl, yl, xr, yr, xt, yt, xb, yb] x max_slices, one row per sample.
template <std::floating_point T>
struct LandmarkTerms {
    std::span<const T> pred;
    std::span<const T> truth;
};

/// Full objective. Without landmark terms cls = lnd = 0.
template <std::floating_point T>
LossResult<T> total_loss(std::span<const T> pred_mask, std::span<const T> target_mask, std::size_t batch,
                         const std::optional<LandmarkTerms<T>>& landmarks, const LossConfig& config,
                         bool with_grad = true) {
    config.validate();
    if (pred_mask.size() != target_mask.size()) throw ValidationError("total_loss: mask shape mismatch");
    LossResult<T> r;
    const T eps = static_cast<T>(config.dice_epsilon);
    const T lambda = static_cast<T>(config.lambda);

    std::vector<T> gdice, gce;
    if (with_grad) {
        gdice.resize(pred_mask.size());
        gce.resize(pred_mask.size());
    }
    const T dice = dice_loss<T>(pred_mask, target_mask, batch, eps, gdice);
    const T ce = binary_cross_entropy<T>(pred_mask, target_mask, gce);
    if (with_grad) {
        r.mask_grad.resize(pred_mask.size());
        for (std::size_t i = 0; i < pred_mask.size(); ++i) r.mask_grad[i] = gdice[i] + gce[i];
    }

    T cls = 0, lnd = 0;
    if (landmarks) {
        const auto& lm = *landmarks;
        if (lm.pred.size() != lm.truth.size() || lm.pred.size() % (batch * kLandmarkStride) != 0) {
            throw ValidationError("total_loss: landmark shape mismatch");
        }
        const std::size_t slices = lm.pred.size() / kLandmarkStride;
        std::vector<T> p(slices), z(slices), tt(slices * 8), tp(slices * 8);
        for (std::size_t s = 0; s < slices; ++s) {
            p[s] = lm.pred[s * kLandmarkStride];
            z[s] = lm.truth[s * kLandmarkStride];
            for (std::size_t k = 0; k < 8; ++k) {
                tp[s * 8 + k] = lm.pred[s * kLandmarkStride + 1 + k];
                tt[s * 8 + k] = lm.truth[s * kLandmarkStride + 1 + k];
            }
        }
        std::vector<T> gp, gt;
        if (with_grad) {
            gp.resize(slices);
            gt.resize(slices * 8);
        }
        cls = cls_loss<T>(p, z, gp);
        lnd = landmark_loss<T>(tt, tp, z, batch, gt);
        if (with_grad) {
            r.landmark_grad.assign(lm.pred.size(), T(0));
            for (std::size_t s = 0; s < slices; ++s) {
                r.landmark_grad[s * kLandmarkStride] = lambda * gp[s];
                for (std::size_t k = 0; k < 8; ++k) {
                    r.landmark_grad[s * kLandmarkStride + 1 + k] = lambda * gt[s * 8 + k];
                }
            }
        }
    }

    r.breakdown.dice = static_cast<double>(dice);
    r.breakdown.ce = static_cast<double>(ce);
    r.breakdown.mask = static_cast<double>(dice + ce);
    r.breakdown.cls = static_cast<double>(cls);
    r.breakdown.lnd = static_cast<double>(lnd);
    r.breakdown.total = static_cast<double>(dice + ce + lambda * (cls + lnd));
    return r;
}

}  // namespace dgmnet
