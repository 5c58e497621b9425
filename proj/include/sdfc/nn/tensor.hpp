#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "sdfc/core/error.hpp"
#include "sdfc/core/rng.hpp"

namespace sdfc::nn {

/// Dense f32 tensor with value semantics. Shapes are small integer vectors;
/// data is a flat row-major buffer (last dimension fastest).
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape, float fill = 0.0f) : shape_(std::move(shape)) {
        data_.assign(numel_of(shape_), fill);
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, float v) { return Tensor(std::move(shape), v); }

    static Tensor from(std::vector<int> shape, std::vector<float> data) {
        Tensor t;
        if (numel_of(shape) != data.size())
            throw ShapeMismatch("Tensor::from: data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
        t.shape_ = std::move(shape);
        t.data_ = std::move(data);
        return t;
    }

    static Tensor randn(std::vector<int> shape, Rng& rng, float stddev = 1.0f) {
        Tensor t(std::move(shape));
        for (float& v : t.data_) v = static_cast<float>(rng.normal()) * stddev;
        return t;
    }

    static Tensor rand_uniform(std::vector<int> shape, Rng& rng, float lo, float hi) {
        Tensor t(std::move(shape));
        for (float& v : t.data_) v = static_cast<float>(rng.uniform(lo, hi));
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::size_t numel() const { return data_.size(); }
    bool defined() const { return !shape_.empty() || !data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    std::vector<float>& raw() { return data_; }
    const std::vector<float>& raw() const { return data_; }

    void fill(float v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (float v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    Tensor reshaped(std::vector<int> new_shape) const {
        if (numel_of(new_shape) != numel())
            throw ShapeMismatch("reshape: cannot view " + shape_str(shape_) + " as " +
                                shape_str(new_shape));
        Tensor t = *this;
        t.shape_ = std::move(new_shape);
        return t;
    }

    static std::size_t numel_of(const std::vector<int>& shape) {
        std::size_t n = 1;
        for (int d : shape) {
            if (d < 0) throw ShapeMismatch("negative dimension in shape " + shape_str(shape));
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    static std::string shape_str(const std::vector<int>& shape) {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ", ";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }

private:
    std::vector<int> shape_;
    std::vector<float> data_;
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeMismatch(std::string(op) + ": shape " + Tensor::shape_str(a.shape()) +
                            " vs " + Tensor::shape_str(b.shape()));
}

}  // namespace sdfc::nn
