#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "flowcomp/errors.hpp"

namespace flowcomp {

struct Shape {
    int channels = 0;
    int height = 0;
    int width = 0;

    std::size_t size() const {
        return static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) *
               static_cast<std::size_t>(width);
    }
    bool valid() const { return channels > 0 && height > 0 && width > 0; }
    bool operator==(const Shape& other) const = default;

    std::string str() const {
        return "(" + std::to_string(channels) + "," + std::to_string(height) + "," +
               std::to_string(width) + ")";
    }
};

// Dense row-major, channel-major grid of float32. Index of (c,h,w) is
// (c*height + h)*width + w.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, float fill = 0.0f) : shape_(shape) {
        if (!shape.valid()) {
            throw config_error("tensor shape must be positive, got " + shape.str());
        }
        data_.assign(shape.size(), fill);
    }

    static Tensor from_data(Shape shape, std::vector<float> data) {
        if (!shape.valid()) {
            throw config_error("tensor shape must be positive, got " + shape.str());
        }
        if (data.size() != shape.size()) {
            throw config_error("tensor data length " + std::to_string(data.size()) +
                               " does not match shape " + shape.str());
        }
        Tensor t;
        t.shape_ = shape;
        t.data_ = std::move(data);
        return t;
    }

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    float& at(int c, int h, int w) { return data_[index(c, h, w)]; }
    float at(int c, int h, int w) const { return data_[index(c, h, w)]; }

    std::size_t index(int c, int h, int w) const {
        return (static_cast<std::size_t>(c) * shape_.height + h) * shape_.width + w;
    }

    bool all_finite() const {
        for (float v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    bool operator==(const Tensor& other) const = default;

private:
    Shape shape_;
    std::vector<float> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* context) {
    if (a.shape() != b.shape()) {
        throw config_error(std::string(context) + ": shape mismatch " + a.shape().str() +
                           " vs " + b.shape().str());
    }
}

inline void require_finite(const Tensor& t, const char* context) {
    if (!t.all_finite()) {
        throw numeric_error(std::string(context) + ": tensor contains non-finite values");
    }
}

}  // namespace flowcomp
