#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "flowcomp/mask.hpp"
#include "flowcomp/tensor.hpp"

namespace flowcomp {

// Row-major matrix of patch feature vectors.
struct FeatureMatrix {
    int dim = 0;
    std::vector<float> data;

    std::size_t count() const {
        return dim > 0 ? data.size() / static_cast<std::size_t>(dim) : 0;
    }
    const float* row(std::size_t i) const {
        return data.data() + i * static_cast<std::size_t>(dim);
    }
    void push_row(const float* values) {
        data.insert(data.end(), values, values + dim);
    }
};

// Per-region sample statistics: masked mean/variance plus the 3x3 patch
// features whose full window lies inside the region.
struct RegionStats {
    int region_id = 0;
    long pixel_count = 0;
    double mean = 0.0;
    double variance = 0.0;
    FeatureMatrix patches;
};

inline RegionStats region_moments(const Tensor& image, const BinaryMask& mask,
                                  int region_id = 0) {
    const Shape shape = image.shape();
    if (mask.height() != shape.height || mask.width() != shape.width) {
        throw config_error("region_moments: mask shape does not match image spatial shape");
    }
    RegionStats stats;
    stats.region_id = region_id;
    stats.pixel_count = static_cast<long>(mask.active_count());
    if (stats.pixel_count == 0) {
        throw config_error("region_moments: mask region is empty");
    }

    // Two-pass moments over masked values, row-major channel-major order.
    double sum = 0.0;
    long values = 0;
    for (int c = 0; c < shape.channels; ++c) {
        for (int h = 0; h < shape.height; ++h) {
            for (int w = 0; w < shape.width; ++w) {
                if (mask.at(h, w) == 1.0f) {
                    sum += image.at(c, h, w);
                    ++values;
                }
            }
        }
    }
    stats.mean = sum / static_cast<double>(values);
    double sq = 0.0;
    for (int c = 0; c < shape.channels; ++c) {
        for (int h = 0; h < shape.height; ++h) {
            for (int w = 0; w < shape.width; ++w) {
                if (mask.at(h, w) == 1.0f) {
                    const double d = image.at(c, h, w) - stats.mean;
                    sq += d * d;
                }
            }
        }
    }
    stats.variance = sq / static_cast<double>(values);
    if (!std::isfinite(stats.mean) || !std::isfinite(stats.variance)) {
        throw numeric_error("region_moments: non-finite statistics");
    }

    stats.patches.dim = 9 * shape.channels;
    std::vector<float> feature(static_cast<std::size_t>(stats.patches.dim));
    for (int h = 1; h + 1 < shape.height; ++h) {
        for (int w = 1; w + 1 < shape.width; ++w) {
            bool inside = true;
            for (int dh = -1; dh <= 1 && inside; ++dh) {
                for (int dw = -1; dw <= 1; ++dw) {
                    if (mask.at(h + dh, w + dw) != 1.0f) {
                        inside = false;
                        break;
                    }
                }
            }
            if (!inside) continue;
            std::size_t f = 0;
            for (int c = 0; c < shape.channels; ++c) {
                for (int dh = -1; dh <= 1; ++dh) {
                    for (int dw = -1; dw <= 1; ++dw) {
                        feature[f++] = image.at(c, h + dh, w + dw);
                    }
                }
            }
            stats.patches.push_row(feature.data());
        }
    }
    return stats;
}

// All interior 3x3 patches of full-frame images, pooled.
inline FeatureMatrix collect_patches(const std::vector<Tensor>& images) {
    FeatureMatrix out;
    for (const Tensor& img : images) {
        RegionStats stats = region_moments(
            img, BinaryMask::ones(img.shape().height, img.shape().width));
        if (out.dim == 0) out.dim = stats.patches.dim;
        if (stats.patches.dim != out.dim) {
            throw config_error("collect_patches: inconsistent feature dimensions");
        }
        out.data.insert(out.data.end(), stats.patches.data.begin(), stats.patches.data.end());
    }
    return out;
}

// Unbiased squared maximum mean discrepancy with the RBF kernel
// k(a,b) = exp(-|a-b|^2 / (2 bandwidth^2)). Can be slightly negative for
// close distributions.
inline double mmd2(const FeatureMatrix& x, const FeatureMatrix& y, double bandwidth) {
    if (x.dim != y.dim) {
        throw config_error("mmd2: feature dimensions differ (" + std::to_string(x.dim) +
                           " vs " + std::to_string(y.dim) + ")");
    }
    if (!(bandwidth > 0.0)) {
        throw config_error("mmd2: bandwidth must be > 0");
    }
    if (x.count() < 2 || y.count() < 2) {
        throw config_error("mmd2: need at least 2 samples per side");
    }
    // Orient the cross-term loop canonically so mmd2(X,Y) and mmd2(Y,X)
    // accumulate in the same order and agree bit-exactly.
    const bool flip =
        (y.count() < x.count()) ||
        (y.count() == x.count() &&
         std::lexicographical_compare(y.data.begin(), y.data.end(), x.data.begin(),
                                      x.data.end()));
    const FeatureMatrix& a = flip ? y : x;
    const FeatureMatrix& b = flip ? x : y;
    const std::size_t n = a.count();
    const std::size_t m = b.count();
    const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
    auto kernel = [&](const float* a, const float* b, int dim) {
        double d2 = 0.0;
        for (int i = 0; i < dim; ++i) {
            const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
            d2 += d * d;
        }
        return std::exp(-d2 * inv);
    };
    double kaa = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j) kaa += kernel(a.row(i), a.row(j), a.dim);
        }
    }
    double kbb = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            if (i != j) kbb += kernel(b.row(i), b.row(j), b.dim);
        }
    }
    double kab = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            kab += kernel(a.row(i), b.row(j), a.dim);
        }
    }
    kaa /= static_cast<double>(n) * (n - 1);
    kbb /= static_cast<double>(m) * (m - 1);
    kab /= static_cast<double>(n) * m;
    return kaa + kbb - 2.0 * kab;
}

// Median of pairwise Euclidean distances (average of the two middle values
// for even counts).
inline double median_pairwise_distance(const FeatureMatrix& features) {
    const std::size_t n = features.count();
    if (n < 2) {
        throw config_error("median_pairwise_distance: need at least 2 feature rows");
    }
    std::vector<double> dists;
    dists.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double d2 = 0.0;
            for (int k = 0; k < features.dim; ++k) {
                const double d = static_cast<double>(features.row(i)[k]) -
                                 static_cast<double>(features.row(j)[k]);
                d2 += d * d;
            }
            dists.push_back(std::sqrt(d2));
        }
    }
    std::sort(dists.begin(), dists.end());
    const std::size_t mid = dists.size() / 2;
    if (dists.size() % 2 == 1) return dists[mid];
    return 0.5 * (dists[mid - 1] + dists[mid]);
}

struct StyleScore {
    int style_id = 0;
    double mmd2 = 0.0;
    double bandwidth = 0.0;
    std::size_t n_region = 0;
    std::size_t n_ref = 0;
};

struct CompositionScore {
    std::vector<StyleScore> styles;
    double average = 0.0;
};

// Per style: MMD^2 between the patches of its masked region and its
// reference patches, with the bandwidth taken from the reference set by the
// median heuristic. Lower is better. The average across styles mirrors the
// masked-region-then-average evaluation protocol.
inline CompositionScore composition_score(const Tensor& image, const MaskSet& masks,
                                          const std::vector<FeatureMatrix>& references) {
    if (references.size() != masks.count()) {
        throw config_error("composition_score: " + std::to_string(references.size()) +
                           " reference sets vs " + std::to_string(masks.count()) + " masks");
    }
    CompositionScore score;
    for (std::size_t i = 0; i < masks.count(); ++i) {
        if (references[i].count() < 2) {
            throw config_error("composition_score: reference set " + std::to_string(i) +
                               " is empty or too small");
        }
        RegionStats stats = region_moments(image, masks.mask(i), static_cast<int>(i));
        if (stats.patches.count() < 2) {
            throw config_error("composition_score: region " + std::to_string(i) +
                               " has fewer than 2 interior patches");
        }
        StyleScore s;
        s.style_id = static_cast<int>(i);
        s.bandwidth = median_pairwise_distance(references[i]);
        if (!(s.bandwidth > 0.0)) {
            throw config_error("composition_score: degenerate reference set " +
                               std::to_string(i) + " (zero median distance)");
        }
        s.n_region = stats.patches.count();
        s.n_ref = references[i].count();
        s.mmd2 = mmd2(stats.patches, references[i], s.bandwidth);
        score.styles.push_back(s);
        score.average += s.mmd2;
    }
    score.average /= static_cast<double>(score.styles.size());
    return score;
}

}  // namespace flowcomp
