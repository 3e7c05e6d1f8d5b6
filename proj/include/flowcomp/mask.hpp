#pragma once

#include <string>
#include <utility>
#include <vector>

#include "flowcomp/tensor.hpp"

namespace flowcomp {

// Spatial mask whose entries are exactly 0.0 or 1.0, stored as floats so
// fusion stays plain tensor arithmetic.
class BinaryMask {
public:
    BinaryMask() = default;

    static BinaryMask from_data(int height, int width, std::vector<float> data) {
        if (height <= 0 || width <= 0) {
            throw config_error("mask shape must be positive");
        }
        if (data.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
            throw config_error("mask data length does not match shape");
        }
        for (float v : data) {
            if (v != 0.0f && v != 1.0f) {
                throw config_error("mask entries must be exactly 0 or 1");
            }
        }
        BinaryMask m;
        m.height_ = height;
        m.width_ = width;
        m.data_ = std::move(data);
        return m;
    }

    static BinaryMask ones(int height, int width) {
        return from_data(height, width,
                         std::vector<float>(static_cast<std::size_t>(height) * width, 1.0f));
    }

    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t size() const { return data_.size(); }
    float at(int h, int w) const { return data_[static_cast<std::size_t>(h) * width_ + w]; }
    const float* data() const { return data_.data(); }

    std::size_t active_count() const {
        std::size_t n = 0;
        for (float v : data_) n += (v == 1.0f);
        return n;
    }

    bool operator==(const BinaryMask& other) const = default;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<float> data_;
};

// Ordered set of binary masks forming a partition of unity: the masks sum
// to exactly 1 at every pixel, so each pixel has exactly one owner.
class MaskSet {
public:
    static MaskSet make(std::vector<BinaryMask> masks) {
        if (masks.empty()) {
            throw config_error("mask set must not be empty");
        }
        const int h = masks.front().height();
        const int w = masks.front().width();
        for (const auto& m : masks) {
            if (m.height() != h || m.width() != w) {
                throw config_error("mask set members must share one shape");
            }
        }
        for (std::size_t p = 0; p < masks.front().size(); ++p) {
            float sum = 0.0f;
            for (const auto& m : masks) sum += m.data()[p];
            if (sum != 1.0f) {
                throw config_error("masks do not form a partition (pixel sum " +
                                   std::to_string(sum) + " at index " + std::to_string(p) + ")");
            }
        }
        MaskSet s;
        s.masks_ = std::move(masks);
        return s;
    }

    std::size_t count() const { return masks_.size(); }
    const BinaryMask& mask(std::size_t i) const { return masks_[i]; }
    int height() const { return masks_.front().height(); }
    int width() const { return masks_.front().width(); }

    auto begin() const { return masks_.begin(); }
    auto end() const { return masks_.end(); }

private:
    std::vector<BinaryMask> masks_;
};

// out(c,h,w) = sum_i tensors[i](c,h,w) * masks[i](h,w); masks broadcast
// across channels. With binary partition masks each pixel copies exactly
// one input, so the reduction order does not change the result.
inline Tensor masked_sum(const std::vector<Tensor>& tensors, const MaskSet& masks) {
    if (tensors.size() != masks.count()) {
        throw config_error("masked_sum: " + std::to_string(tensors.size()) + " tensors vs " +
                           std::to_string(masks.count()) + " masks");
    }
    const Shape shape = tensors.front().shape();
    for (const auto& t : tensors) {
        if (t.shape() != shape) {
            throw config_error("masked_sum: tensors must share one shape");
        }
    }
    if (shape.height != masks.height() || shape.width != masks.width()) {
        throw config_error("masked_sum: mask shape (" + std::to_string(masks.height()) + "," +
                           std::to_string(masks.width()) + ") does not match tensor spatial shape " +
                           shape.str());
    }
    Tensor out(shape);
    const std::size_t plane = static_cast<std::size_t>(shape.height) * shape.width;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const float* src = tensors[i].data();
        const float* m = masks.mask(i).data();
        float* dst = out.data();
        for (int c = 0; c < shape.channels; ++c) {
            const std::size_t base = static_cast<std::size_t>(c) * plane;
            for (std::size_t p = 0; p < plane; ++p) {
                dst[base + p] += src[base + p] * m[p];
            }
        }
    }
    return out;
}

}  // namespace flowcomp
