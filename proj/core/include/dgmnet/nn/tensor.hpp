#pragma once

#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace dgmnet::nn {

/// Cache-line aligned storage. Vectorised kernels round differently depending on where a
/// buffer starts, so a fixed alignment keeps results independent of heap layout.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

    template <class U>
    friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) noexcept {
        return true;
    }
};

using FloatBuffer = std::vector<float, AlignedAllocator<float>>;

/// NCHW extents. Feature vectors use (N, F, 1, 1).
struct Shape {
    std::size_t n = 0;
    std::size_t c = 0;
    std::size_t h = 1;
    std::size_t w = 1;

    std::size_t numel() const noexcept { return n * c * h * w; }
    std::size_t plane() const noexcept { return h * w; }
    std::size_t sample() const noexcept { return c * h * w; }
    friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

/// Dense float tensor in NCHW order.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> data);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    float* data() noexcept { return data_.data(); }
    const float* data() const noexcept { return data_.data(); }
    std::span<float> values() noexcept { return data_; }
    std::span<const float> values() const noexcept { return data_; }

    float* sample(std::size_t n) noexcept { return data_.data() + n * shape_.sample(); }
    const float* sample(std::size_t n) const noexcept { return data_.data() + n * shape_.sample(); }
    float* plane(std::size_t n, std::size_t c) noexcept { return sample(n) + c * shape_.plane(); }
    const float* plane(std::size_t n, std::size_t c) const noexcept { return sample(n) + c * shape_.plane(); }

    float& operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) noexcept {
        return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
    }
    float operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const noexcept {
        return data_[((n * shape_.c + c) * shape_.h + y) * shape_.w + x];
    }
    float& operator[](std::size_t i) noexcept { return data_[i]; }
    float operator[](std::size_t i) const noexcept { return data_[i]; }

    void fill(float v);
    void zero() { fill(0.0f); }
    /// Same data, new extents with equal element count.
    Tensor reshaped(Shape s) const;

    Tensor& operator+=(const Tensor& other);

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_{};
    FloatBuffer data_;
};

/// Concatenate along channels.
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Split channel-concatenated gradient back into its two parts.
void split_channels(const Tensor& g, std::size_t c_first, Tensor& first, Tensor& second);

/// True when every element is finite.
bool all_finite(const Tensor& t);

}  // namespace dgmnet::nn
