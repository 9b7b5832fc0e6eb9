#include "dgmnet/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "dgmnet/errors.hpp"

namespace dgmnet::nn {

std::string to_string(const Shape& s) {
    return "(" + std::to_string(s.n) + ", " + std::to_string(s.c) + ", " + std::to_string(s.h) + ", " +
           std::to_string(s.w) + ")";
}

Tensor::Tensor(Shape shape, float fill) : shape_(shape), data_(shape.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(shape), data_(data.begin(), data.end()) {
    if (data_.size() != shape_.numel()) {
        throw ValidationError("tensor data size does not match shape " + to_string(shape_));
    }
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape s) const {
    if (s.numel() != shape_.numel()) {
        throw ValidationError("cannot reshape " + to_string(shape_) + " to " + to_string(s));
    }
    Tensor out(s);
    out.data_ = data_;
    return out;
}

Tensor& Tensor::operator+=(const Tensor& other) {
    if (!(other.shape_ == shape_)) {
        throw ValidationError("tensor add shape mismatch " + to_string(shape_) + " vs " + to_string(other.shape_));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
        throw ValidationError("concat spatial mismatch " + to_string(sa) + " vs " + to_string(sb));
    }
    Tensor out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
    for (std::size_t n = 0; n < sa.n; ++n) {
        std::memcpy(out.sample(n), a.sample(n), sa.sample() * sizeof(float));
        std::memcpy(out.sample(n) + sa.sample(), b.sample(n), sb.sample() * sizeof(float));
    }
    return out;
}

void split_channels(const Tensor& g, std::size_t c_first, Tensor& first, Tensor& second) {
    const Shape& s = g.shape();
    first = Tensor(Shape{s.n, c_first, s.h, s.w});
    second = Tensor(Shape{s.n, s.c - c_first, s.h, s.w});
    for (std::size_t n = 0; n < s.n; ++n) {
        std::memcpy(first.sample(n), g.sample(n), first.shape().sample() * sizeof(float));
        std::memcpy(second.sample(n), g.sample(n) + first.shape().sample(), second.shape().sample() * sizeof(float));
    }
}

bool all_finite(const Tensor& t) {
    return std::all_of(t.values().begin(), t.values().end(), [](float v) { return std::isfinite(v); });
}

}  // namespace dgmnet::nn
