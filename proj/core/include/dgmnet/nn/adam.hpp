#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dgmnet/nn/layers.hpp"

namespace dgmnet::nn {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

using NamedParameters = std::vector<std::pair<std::string, Parameter*>>;

/// Adam with bias correction. Frozen parameters are skipped entirely.
class Adam {
public:
    struct Moments {
        Tensor m;
        Tensor v;
    };

    explicit Adam(AdamConfig config = {}) : config_(config) {}

    void step(const NamedParameters& params);

    const AdamConfig& config() const { return config_; }
    std::int64_t steps() const { return t_; }

    // Optimizer state, exposed for checkpoint/resume.
    std::map<std::string, Moments>& moments() { return moments_; }
    const std::map<std::string, Moments>& moments() const { return moments_; }
    void set_steps(std::int64_t t) { t_ = t; }

private:
    AdamConfig config_;
    std::int64_t t_ = 0;
    std::map<std::string, Moments> moments_;
};

}  // namespace dgmnet::nn
