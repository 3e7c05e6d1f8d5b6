#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "flowcomp/mask.hpp"
#include "flowcomp/tensor.hpp"

namespace flowcomp {

// Single-channel depth field with values in [0,1]; 1 = near, 0 = far.
// Flipping the orientation only swaps the roles of the two masks.
class DepthMap {
public:
    explicit DepthMap(Tensor depth) : depth_(std::move(depth)) {
        if (depth_.shape().channels != 1) {
            throw config_error("depth map must have exactly 1 channel, got " +
                               depth_.shape().str());
        }
        for (std::size_t i = 0; i < depth_.size(); ++i) {
            if (!std::isfinite(depth_[i])) {
                throw numeric_error("depth map contains non-finite values");
            }
            if (depth_[i] < 0.0f) depth_[i] = 0.0f;
            if (depth_[i] > 1.0f) depth_[i] = 1.0f;
        }
    }

    const Tensor& tensor() const { return depth_; }
    int height() const { return depth_.shape().height; }
    int width() const { return depth_.shape().width; }
    float at(int h, int w) const { return depth_.at(0, h, w); }

private:
    Tensor depth_;
};

// Two binary masks from one threshold: mask 1 owns pixels with depth >= theta
// (inclusive, so the pair is always a partition), mask 2 is the complement.
inline MaskSet threshold_masks(const DepthMap& depth, float theta) {
    if (!(theta > 0.0f && theta < 1.0f)) {
        throw config_error("threshold must lie strictly inside (0,1)");
    }
    const int h = depth.height();
    const int w = depth.width();
    std::vector<float> near(static_cast<std::size_t>(h) * w);
    std::vector<float> far(near.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const bool hit = depth.at(y, x) >= theta;
            near[static_cast<std::size_t>(y) * w + x] = hit ? 1.0f : 0.0f;
            far[static_cast<std::size_t>(y) * w + x] = hit ? 0.0f : 1.0f;
        }
    }
    return MaskSet::make({BinaryMask::from_data(h, w, std::move(near)),
                          BinaryMask::from_data(h, w, std::move(far))});
}

// Analytic depth fields replacing real depth assets.
struct DepthSpec {
    enum class Kind { HalfPlane, Disk, Ramp };
    enum class Axis { Horizontal, Vertical };

    Kind kind = Kind::HalfPlane;
    Axis axis = Axis::Vertical;  // HalfPlane: orientation of the boundary line;
                                 // Ramp: direction along which depth increases
    double fraction = 0.5;       // HalfPlane: near share of the extent
    int center_h = 0;            // Disk
    int center_w = 0;
    double radius = 0.0;

    static DepthSpec half_plane(Axis axis, double fraction) {
        DepthSpec s;
        s.kind = Kind::HalfPlane;
        s.axis = axis;
        s.fraction = fraction;
        return s;
    }
    static DepthSpec disk(int center_h, int center_w, double radius) {
        DepthSpec s;
        s.kind = Kind::Disk;
        s.center_h = center_h;
        s.center_w = center_w;
        s.radius = radius;
        return s;
    }
    static DepthSpec ramp(Axis axis) {
        DepthSpec s;
        s.kind = Kind::Ramp;
        s.axis = axis;
        return s;
    }
};

// HalfPlane: cells whose center falls in the first `fraction` of the extent
// get depth 1. Disk: depth 1 inside Euclidean distance `radius` of the
// center cell. Ramp: linear 0..1 along the axis.
inline DepthMap synth_depth(const DepthSpec& spec, int height, int width) {
    if (height <= 0 || width <= 0) {
        throw config_error("synth_depth: shape must be positive");
    }
    Tensor d(Shape{1, height, width});
    switch (spec.kind) {
        case DepthSpec::Kind::HalfPlane: {
            if (!(spec.fraction >= 0.0 && spec.fraction <= 1.0)) {
                throw config_error("half-plane fraction must lie in [0,1]");
            }
            for (int h = 0; h < height; ++h) {
                for (int w = 0; w < width; ++w) {
                    const double center = (spec.axis == DepthSpec::Axis::Vertical)
                                              ? (w + 0.5) / width
                                              : (h + 0.5) / height;
                    d.at(0, h, w) = center < spec.fraction ? 1.0f : 0.0f;
                }
            }
            break;
        }
        case DepthSpec::Kind::Disk: {
            if (spec.center_h < 0 || spec.center_h >= height || spec.center_w < 0 ||
                spec.center_w >= width) {
                throw config_error("disk center must lie within the grid");
            }
            if (spec.radius < 0.0) {
                throw config_error("disk radius must be >= 0");
            }
            const double r2 = spec.radius * spec.radius;
            for (int h = 0; h < height; ++h) {
                for (int w = 0; w < width; ++w) {
                    const double dh = h - spec.center_h;
                    const double dw = w - spec.center_w;
                    d.at(0, h, w) = (dh * dh + dw * dw <= r2) ? 1.0f : 0.0f;
                }
            }
            break;
        }
        case DepthSpec::Kind::Ramp: {
            for (int h = 0; h < height; ++h) {
                for (int w = 0; w < width; ++w) {
                    double v = 0.0;
                    if (spec.axis == DepthSpec::Axis::Horizontal) {
                        v = width > 1 ? static_cast<double>(w) / (width - 1) : 0.0;
                    } else {
                        v = height > 1 ? static_cast<double>(h) / (height - 1) : 0.0;
                    }
                    d.at(0, h, w) = static_cast<float>(v);
                }
            }
            break;
        }
    }
    return DepthMap(std::move(d));
}

}  // namespace flowcomp
