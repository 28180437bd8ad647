#ifndef SOFTPATCH_SCORING_HPP
#define SOFTPATCH_SCORING_HPP

#include "coreset.hpp"
#include "feature_io.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace softpatch {

struct NearestMatch {
    std::size_t index = 0;
    double distance = 0.0;
};

/// Exact linear scan over an already projected query; lowest index wins ties.
inline NearestMatch nearest_entry(const PatchMatrix& entries, std::span<const float> query) {
    if (entries.rows() == 0) {
        throw Error(ErrorKind::EmptyInput, "nearest-neighbor query against an empty bank");
    }
    if (query.size() != entries.dim) {
        throw Error(ErrorKind::DimensionMismatch, "query dimension " + std::to_string(query.size()) +
                                                      " does not match bank dimension " + std::to_string(entries.dim));
    }
    NearestMatch best{0, std::numeric_limits<double>::infinity()};
    for (std::size_t i = 0; i < entries.rows(); ++i) {
        const double d = squared_distance(entries.row(i), query);
        if (d < best.distance) {
            best = {i, d};
        }
    }
    best.distance = std::sqrt(best.distance);
    return best;
}

/// Nearest bank entry to a raw feature vector; the bank's projection is applied first.
inline NearestMatch query_nearest(const MemoryBank& bank, std::span<const float> patch) {
    if (bank.size() == 0) {
        throw Error(ErrorKind::EmptyInput, "nearest-neighbor query against an empty bank");
    }
    if (patch.size() != bank.input_dim()) {
        throw Error(ErrorKind::DimensionMismatch, "query dimension " + std::to_string(patch.size()) +
                                                      " does not match bank input dimension " +
                                                      std::to_string(bank.input_dim()));
    }
    if (bank.projection) {
        const auto projected = bank.projection->apply(patch);
        return nearest_entry(bank.entries, projected);
    }
    return nearest_entry(bank.entries, patch);
}

/// Per-patch scores (samples, grid_h, grid_w) and the matched bank entry of each patch.
struct PatchScores {
    std::size_t samples = 0;
    std::size_t grid_h = 0;
    std::size_t grid_w = 0;
    std::vector<double> scores;
    std::vector<std::size_t> matches;

    std::size_t positions() const { return grid_h * grid_w; }

    std::span<const double> grid(std::size_t sample) const {
        return std::span<const double>(scores).subspan(sample * positions(), positions());
    }
};

/// s = W[m*] * ||p - m*|| for every test patch.
inline PatchScores score_patches(const MemoryBank& bank, const FeatureTensor& test) {
    if (test.channels() != bank.input_dim()) {
        throw Error(ErrorKind::DimensionMismatch, "test features have " + std::to_string(test.channels()) +
                                                      " channels, bank expects " + std::to_string(bank.input_dim()));
    }
    PatchScores out{test.samples(), test.grid_h(), test.grid_w(), {}, {}};
    const std::size_t total = test.shape().patches();
    out.scores.resize(total);
    out.matches.resize(total);
    parallel_for(total, [&](std::size_t flat) {
        const auto m = query_nearest(bank, test.patch(flat));
        out.scores[flat] = bank.soft_weights[m.index] * m.distance;
        out.matches[flat] = m.index;
    });
    return out;
}

inline double image_score(std::span<const double> grid) {
    if (grid.empty()) {
        throw Error(ErrorKind::EmptyInput, "image score of an empty grid");
    }
    double best = grid[0];
    for (double v : grid) {
        best = std::max(best, v);
    }
    return best;
}

inline std::vector<double> image_scores(const PatchScores& scores) {
    std::vector<double> out(scores.samples);
    for (std::size_t i = 0; i < scores.samples; ++i) {
        out[i] = image_score(scores.grid(i));
    }
    return out;
}

namespace detail {

/// Normalized 1-D Gaussian kernel truncated at 4 sigma.
inline std::vector<double> gaussian_kernel(double sigma) {
    const auto radius = static_cast<std::ptrdiff_t>(std::ceil(4.0 * sigma));
    std::vector<double> k(std::size_t(2 * radius + 1));
    double sum = 0.0;
    for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * double(i * i) / (sigma * sigma));
        k[std::size_t(i + radius)] = v;
        sum += v;
    }
    for (auto& v : k) {
        v /= sum;
    }
    return k;
}

/// Half-sample symmetric reflection (d c b a | a b c d | d c b a).
inline std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
    const auto len = static_cast<std::ptrdiff_t>(n);
    if (len == 1) {
        return 0;
    }
    const std::ptrdiff_t period = 2 * len;
    i %= period;
    if (i < 0) {
        i += period;
    }
    return static_cast<std::size_t>(i < len ? i : period - 1 - i);
}

inline void blur_axis(std::vector<double>& img, std::size_t rows, std::size_t cols, const std::vector<double>& kernel,
                      bool along_rows) {
    const auto radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
    std::vector<double> out(img.size());
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            double acc = 0.0;
            for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
                const double kv = kernel[std::size_t(t + radius)];
                if (along_rows) {
                    acc += kv * img[r * cols + reflect(std::ptrdiff_t(c) + t, cols)];
                } else {
                    acc += kv * img[reflect(std::ptrdiff_t(r) + t, rows) * cols + c];
                }
            }
            out[r * cols + c] = acc;
        }
    }
    img.swap(out);
}

}

inline constexpr double default_smoothing_sigma = 4.0;

/**
 * Corner-aligned bilinear upsampling of a patch grid to (height, width),
 * then a separable Gaussian blur (truncated at 4 sigma, reflected borders).
 * sigma = 0 disables the blur. Row-major output.
 */
inline std::vector<double> anomaly_map(std::span<const double> grid, std::size_t grid_h, std::size_t grid_w,
                                       std::size_t height, std::size_t width,
                                       double smoothing_sigma = default_smoothing_sigma) {
    if (grid.size() != grid_h * grid_w || grid.empty()) {
        throw Error(ErrorKind::DimensionMismatch, "anomaly_map: grid size does not match its shape");
    }
    if (height < grid_h || width < grid_w) {
        throw Error(ErrorKind::InvalidArgument, "anomaly_map: target smaller than the patch grid");
    }
    if (!(smoothing_sigma >= 0.0) || !std::isfinite(smoothing_sigma)) {
        throw Error(ErrorKind::InvalidArgument, "anomaly_map: smoothing sigma must be >= 0");
    }
    auto source_coord = [](std::size_t i, std::size_t out_n, std::size_t in_n) {
        return out_n <= 1 ? 0.0 : double(i) * double(in_n - 1) / double(out_n - 1);
    };
    std::vector<double> out(height * width);
    for (std::size_t y = 0; y < height; ++y) {
        const double sy = source_coord(y, height, grid_h);
        const auto y0 = std::min(static_cast<std::size_t>(sy), grid_h - 1);
        const auto y1 = std::min(y0 + 1, grid_h - 1);
        const double fy = sy - double(y0);
        for (std::size_t x = 0; x < width; ++x) {
            const double sx = source_coord(x, width, grid_w);
            const auto x0 = std::min(static_cast<std::size_t>(sx), grid_w - 1);
            const auto x1 = std::min(x0 + 1, grid_w - 1);
            const double fx = sx - double(x0);
            const double top = (1.0 - fx) * grid[y0 * grid_w + x0] + fx * grid[y0 * grid_w + x1];
            const double bottom = (1.0 - fx) * grid[y1 * grid_w + x0] + fx * grid[y1 * grid_w + x1];
            out[y * width + x] = (1.0 - fy) * top + fy * bottom;
        }
    }
    if (smoothing_sigma > 0.0) {
        const auto kernel = detail::gaussian_kernel(smoothing_sigma);
        detail::blur_axis(out, height, width, kernel, true);
        detail::blur_axis(out, height, width, kernel, false);
    }
    return out;
}

/**
 * Scores for a test set. Image scores come from `image_bank`; the per-patch
 * grids and provenance come from `map_bank` (the same bank unless two banks
 * were built).
 */
struct ScoreReport {
    std::vector<std::string> ids;
    std::vector<double> image_scores;
    PatchScores per_patch;
    std::vector<PatchRef> nearest_provenance;
    schema::json image_bank_config;
    schema::json map_bank_config;
};

inline ScoreReport score_report(const MemoryBank& image_bank, const MemoryBank* map_bank, const FeatureTensor& test,
                                std::vector<std::string> ids) {
    if (ids.size() != test.samples()) {
        throw Error(ErrorKind::DimensionMismatch, "score_report: one id per test sample is required");
    }
    ScoreReport report;
    report.ids = std::move(ids);
    const auto image = score_patches(image_bank, test);
    report.image_scores = softpatch::image_scores(image);
    const MemoryBank& maps = map_bank != nullptr ? *map_bank : image_bank;
    report.per_patch = map_bank != nullptr ? score_patches(maps, test) : image;
    report.nearest_provenance.reserve(report.per_patch.matches.size());
    for (auto m : report.per_patch.matches) {
        report.nearest_provenance.push_back(maps.provenance[m]);
    }
    report.image_bank_config = image_bank.config;
    report.map_bank_config = maps.config;
    return report;
}

inline schema::json to_json(const ScoreReport& r) {
    using schema::json;
    json per_image = json::array();
    const std::size_t positions = r.per_patch.positions();
    for (std::size_t i = 0; i < r.ids.size(); ++i) {
        json nearest = json::array();
        for (std::size_t p = 0; p < positions; ++p) {
            const auto& ref = r.nearest_provenance[i * positions + p];
            nearest.push_back({ref.sample, ref.h, ref.w});
        }
        per_image.push_back({{"id", r.ids[i]}, {"image_score", r.image_scores[i]}, {"nearest", std::move(nearest)}});
    }
    return json{{"schema_version", schema::schema_version},
                {"grid", {r.per_patch.grid_h, r.per_patch.grid_w}},
                {"image_bank", r.image_bank_config},
                {"map_bank", r.map_bank_config},
                {"per_image", std::move(per_image)}};
}

/// Per-patch grids as an SPF1 tensor (N, h, w, 1).
inline FeatureTensor per_patch_tensor(const PatchScores& scores) {
    std::vector<float> data(scores.scores.begin(), scores.scores.end());
    return FeatureTensor({scores.samples, scores.grid_h, scores.grid_w, 1}, std::move(data));
}

}

#endif
