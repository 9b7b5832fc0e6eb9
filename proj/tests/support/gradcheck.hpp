#pragma once

// Float finite-difference checks for layers. The scalar probed is sum(y * r) for a fixed
// random r, accumulated in double. Entries whose forward and backward one-sided differences
// disagree sit on a ReLU or max-pool kink and are skipped.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "dgmnet/nn/layers.hpp"

namespace dgmnet::check {

struct GradReport {
    double input_error = 0.0;
    double param_error = 0.0;  // worst over parameters
    std::size_t checked = 0;
    std::size_t skipped = 0;
};

inline nn::Tensor random_tensor(nn::Shape s, std::mt19937_64& rng, float scale = 1.0f) {
    std::normal_distribution<float> g(0.0f, scale);
    nn::Tensor t(s);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = g(rng);
    return t;
}

inline double probe(const nn::Tensor& y, const nn::Tensor& r) {
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += static_cast<double>(y[i]) * r[i];
    return s;
}

inline double norm_relative(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return std::sqrt(d) / std::max(std::sqrt(na) + std::sqrt(nb), 1e-12);
}

/// `forward` must be deterministic; `backward` takes dy and returns dx, accumulating
/// parameter gradients. At most `samples` entries per tensor are probed.
inline GradReport gradient_check(const std::function<nn::Tensor(const nn::Tensor&)>& forward,
                                 const std::function<nn::Tensor(const nn::Tensor&)>& backward, nn::Tensor x,
                                 const std::vector<nn::Parameter*>& params, std::mt19937_64& rng,
                                 float h = 1e-3f, std::size_t samples = 48, bool check_input = true) {
    const nn::Tensor y0 = forward(x);
    const nn::Tensor r = random_tensor(y0.shape(), rng);
    for (nn::Parameter* p : params) p->grad.zero();
    forward(x);
    const nn::Tensor dx = backward(r);

    auto pick = [&](std::size_t n) {
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(std::min(n, samples));
        return idx;
    };
    GradReport rep;
    std::vector<double> a, n;
    auto sample = [&](float& slot, double analytic) {
        const float keep = slot;
        const double mid = probe(forward(x), r);
        slot = keep + h;
        const double up = probe(forward(x), r);
        slot = keep - h;
        const double down = probe(forward(x), r);
        slot = keep;
        const double step = static_cast<double>(h);
        const double fwd = (up - mid) / step;
        const double bwd = (mid - down) / step;
        if (std::abs(fwd - bwd) > 0.05 * (std::abs(fwd) + std::abs(bwd)) + 1e-2) {
            ++rep.skipped;
            return;
        }
        ++rep.checked;
        a.push_back(analytic);
        n.push_back((up - down) / (2.0 * step));
    };
    if (check_input) {
        for (std::size_t i : pick(x.size())) sample(x[i], dx[i]);
        rep.input_error = norm_relative(a, n);
    }
    for (nn::Parameter* p : params) {
        a.clear();
        n.clear();
        for (std::size_t i : pick(p->value.size())) sample(p->value[i], p->grad[i]);
        rep.param_error = std::max(rep.param_error, norm_relative(a, n));
    }
    return rep;
}

}  // namespace dgmnet::check
