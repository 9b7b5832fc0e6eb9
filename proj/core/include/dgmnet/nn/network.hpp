#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "dgmnet/nn/adam.hpp"
#include "dgmnet/nn/layers.hpp"

namespace dgmnet::nn {

using NamedBuffers = std::vector<std::pair<std::string, Tensor*>>;

/// Root of a trainable model: flat named views over every parameter and buffer.
class Network : public Module {
public:
    NamedParameters named_parameters();
    NamedBuffers named_buffers();

    /// Total scalar count; `trainable_only` skips frozen parameters.
    std::size_t parameter_count(bool trainable_only = false);
    void zero_grad();

    /// Freeze every parameter whose name starts with `prefix` (all when empty).
    void freeze(const std::string& prefix = "");
    std::vector<std::string> frozen_names();
    bool fully_frozen();

    /// Copy parameter values and buffers from a network with an identical name/shape table.
    void copy_state_from(Network& other);

protected:
    Network() = default;
};

}  // namespace dgmnet::nn
