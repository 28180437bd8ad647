#ifndef SOFTPATCH_TENSOR_HPP
#define SOFTPATCH_TENSOR_HPP

#include "error.hpp"

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace softpatch {

struct TensorShape {
    std::size_t samples = 0;
    std::size_t grid_h = 0;
    std::size_t grid_w = 0;
    std::size_t channels = 0;

    std::size_t positions() const { return grid_h * grid_w; }
    std::size_t patches() const { return samples * grid_h * grid_w; }
    std::size_t size() const { return samples * grid_h * grid_w * channels; }

    bool operator==(const TensorShape&) const = default;
};

inline std::string to_string(const TensorShape& s) {
    return "(" + std::to_string(s.samples) + "," + std::to_string(s.grid_h) + "," + std::to_string(s.grid_w) + "," +
           std::to_string(s.channels) + ")";
}

/**
 * Dense float32 patch features in (sample, h, w, channel) order. All patches
 * of one sample are contiguous and the channel vector of a patch is a
 * contiguous span, so a position group is a constant-stride gather.
 */
class FeatureTensor {
public:
    FeatureTensor() = default;

    FeatureTensor(TensorShape shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
        if (shape_.samples == 0 || shape_.grid_h == 0 || shape_.grid_w == 0 || shape_.channels == 0) {
            throw Error(ErrorKind::InvalidArgument, "tensor dimensions must be >= 1, got " + softpatch::to_string(shape_));
        }
        if (data_.size() != shape_.size()) {
            throw Error(ErrorKind::DimensionMismatch, "tensor data length " + std::to_string(data_.size()) +
                                                          " does not match shape " + softpatch::to_string(shape_));
        }
    }

    explicit FeatureTensor(TensorShape shape) : FeatureTensor(shape, std::vector<float>(shape.size(), 0.0f)) {}

    const TensorShape& shape() const { return shape_; }
    std::size_t samples() const { return shape_.samples; }
    std::size_t grid_h() const { return shape_.grid_h; }
    std::size_t grid_w() const { return shape_.grid_w; }
    std::size_t channels() const { return shape_.channels; }

    std::span<const float> data() const { return data_; }
    std::span<float> data() { return data_; }

    std::size_t patch_index(std::size_t sample, std::size_t h, std::size_t w) const {
        return (sample * shape_.grid_h + h) * shape_.grid_w + w;
    }

    std::span<const float> patch(std::size_t sample, std::size_t h, std::size_t w) const {
        return std::span<const float>(data_).subspan(patch_index(sample, h, w) * shape_.channels, shape_.channels);
    }

    std::span<float> patch(std::size_t sample, std::size_t h, std::size_t w) {
        return std::span<float>(data_).subspan(patch_index(sample, h, w) * shape_.channels, shape_.channels);
    }

    /// Patch by flat (sample, h, w) index.
    std::span<const float> patch(std::size_t flat) const {
        return std::span<const float>(data_).subspan(flat * shape_.channels, shape_.channels);
    }

    std::span<const float> sample(std::size_t i) const {
        const std::size_t stride = shape_.positions() * shape_.channels;
        return std::span<const float>(data_).subspan(i * stride, stride);
    }

    /// Throws NonFiniteError at the first NaN/Inf.
    void check_finite(const std::string& where = "tensor") const {
        for (std::size_t i = 0; i < data_.size(); ++i) {
            if (!std::isfinite(data_[i])) {
                throw NonFiniteError(i, where);
            }
        }
    }

    /// Stacks the given samples of this tensor into a new tensor.
    FeatureTensor select_samples(std::span<const std::size_t> indices) const {
        TensorShape s = shape_;
        s.samples = indices.size();
        std::vector<float> out;
        out.reserve(s.size());
        for (auto i : indices) {
            if (i >= shape_.samples) {
                throw Error(ErrorKind::InvalidArgument, "sample index " + std::to_string(i) + " out of range");
            }
            auto row = sample(i);
            out.insert(out.end(), row.begin(), row.end());
        }
        return FeatureTensor(s, std::move(out));
    }

    bool operator==(const FeatureTensor&) const = default;

private:
    TensorShape shape_;
    std::vector<float> data_;
};

inline double squared_distance(std::span<const float> a, std::span<const float> b) {
    double acc = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c) {
        const double d = static_cast<double>(a[c]) - static_cast<double>(b[c]);
        acc += d * d;
    }
    return acc;
}

inline double euclidean_distance(std::span<const float> a, std::span<const float> b) {
    return std::sqrt(squared_distance(a, b));
}

}

#endif
