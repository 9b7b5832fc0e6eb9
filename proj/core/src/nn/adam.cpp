#include "dgmnet/nn/adam.hpp"

#include <cmath>

namespace dgmnet::nn {

void Adam::step(const NamedParameters& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    const float step_size = static_cast<float>(config_.learning_rate / bc1);
    const float b1 = static_cast<float>(config_.beta1), b2 = static_cast<float>(config_.beta2);
    const float inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
    const float eps = static_cast<float>(config_.epsilon);

    for (const auto& [name, p] : params) {
        if (p->frozen) continue;
        auto it = moments_.find(name);
        if (it == moments_.end()) {
            it = moments_.emplace(name, Moments{Tensor(p->value.shape()), Tensor(p->value.shape())}).first;
        }
        Tensor& m = it->second.m;
        Tensor& v = it->second.v;
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const float g = p->grad[i];
            m[i] = b1 * m[i] + (1.0f - b1) * g;
            v[i] = b2 * v[i] + (1.0f - b2) * g * g;
            p->value[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
        }
    }
}

}  // namespace dgmnet::nn
