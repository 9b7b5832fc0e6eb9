#include "dgmnet/nn/network.hpp"

#include "dgmnet/errors.hpp"

namespace dgmnet::nn {

NamedParameters Network::named_parameters() {
    NamedParameters out;
    visit_parameters("", [&](const std::string& name, Parameter& p) { out.emplace_back(name, &p); });
    return out;
}

NamedBuffers Network::named_buffers() {
    NamedBuffers out;
    visit_buffers("", [&](const std::string& name, Tensor& t) { out.emplace_back(name, &t); });
    return out;
}

std::size_t Network::parameter_count(bool trainable_only) {
    std::size_t total = 0;
    for (const auto& [name, p] : named_parameters()) {
        if (trainable_only && p->frozen) continue;
        total += p->value.size();
    }
    return total;
}

void Network::zero_grad() {
    for (const auto& [name, p] : named_parameters()) p->grad.zero();
}

void Network::freeze(const std::string& prefix) {
    for (const auto& [name, p] : named_parameters()) {
        if (name.starts_with(prefix)) {
            p->frozen = true;
            p->grad.zero();
        }
    }
}

std::vector<std::string> Network::frozen_names() {
    std::vector<std::string> out;
    for (const auto& [name, p] : named_parameters()) {
        if (p->frozen) out.push_back(name);
    }
    return out;
}

bool Network::fully_frozen() {
    for (const auto& [name, p] : named_parameters()) {
        if (!p->frozen) return false;
    }
    return true;
}

void Network::copy_state_from(Network& other) {
    auto mine = named_parameters();
    auto theirs = other.named_parameters();
    if (mine.size() != theirs.size()) throw ValidationError("copy_state_from: parameter tables differ");
    for (std::size_t i = 0; i < mine.size(); ++i) {
        if (mine[i].first != theirs[i].first || !(mine[i].second->value.shape() == theirs[i].second->value.shape())) {
            throw ValidationError("copy_state_from: mismatch at " + mine[i].first);
        }
        mine[i].second->value = theirs[i].second->value;
    }
    auto mb = named_buffers();
    auto tb = other.named_buffers();
    if (mb.size() != tb.size()) throw ValidationError("copy_state_from: buffer tables differ");
    for (std::size_t i = 0; i < mb.size(); ++i) *mb[i].second = *tb[i].second;
}

}  // namespace dgmnet::nn
