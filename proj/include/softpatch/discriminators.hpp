#ifndef SOFTPATCH_DISCRIMINATORS_HPP
#define SOFTPATCH_DISCRIMINATORS_HPP

#include "json_schema.hpp"
#include "parallel.hpp"
#include "tensor.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <string_view>
#include <vector>

/**
 * @file discriminators.hpp
 *
 * @brief Patch-level noise discriminators.
 *
 * Every discriminator scores a patch only against the other samples' patches
 * at the same grid position (the "position group"). Higher score means the
 * patch is more likely to come from a contaminating anomalous sample.
 */

namespace softpatch {

enum class Discriminator { nn, mvg, lof };

inline std::string_view to_string(Discriminator d) {
    switch (d) {
    case Discriminator::nn: return "nn";
    case Discriminator::mvg: return "mvg";
    case Discriminator::lof: return "lof";
    }
    return "?";
}

enum class ScoreKind { nn, mvg, lof, rank_normalized, fused, uniform };

inline std::string_view to_string(ScoreKind k) {
    switch (k) {
    case ScoreKind::nn: return "nn";
    case ScoreKind::mvg: return "mvg";
    case ScoreKind::lof: return "lof";
    case ScoreKind::rank_normalized: return "rank_normalized";
    case ScoreKind::fused: return "fused";
    case ScoreKind::uniform: return "uniform";
    }
    return "?";
}

struct Selectors {
    bool nn = false;
    bool mvg = true;
    bool lof = true;

    bool selected(Discriminator d) const {
        switch (d) {
        case Discriminator::nn: return nn;
        case Discriminator::mvg: return mvg;
        case Discriminator::lof: return lof;
        }
        return false;
    }

    int count() const { return int(nn) + int(mvg) + int(lof); }

    bool operator==(const Selectors&) const = default;
};

struct DiscriminatorConfig {
    std::size_t lof_k = 6;
    double epsilon = 0.01;
    Selectors selectors;

    /// Ranks are taken within each position group of N scores.
    static constexpr std::string_view rank_population = "per_position";
    static constexpr std::string_view tie_rule = "average_rank";

    void validate() const {
        if (lof_k < 1) {
            throw Error(ErrorKind::InvalidArgument, "lof_k must be >= 1");
        }
        if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
            throw Error(ErrorKind::InvalidArgument, "epsilon must be positive");
        }
    }

    bool operator==(const DiscriminatorConfig&) const = default;
};

inline schema::json to_json(const DiscriminatorConfig& cfg) {
    return schema::json{{"lof_k", cfg.lof_k},
                        {"epsilon", cfg.epsilon},
                        {"selectors", {int(cfg.selectors.nn), int(cfg.selectors.mvg), int(cfg.selectors.lof)}},
                        {"rank_population", DiscriminatorConfig::rank_population},
                        {"tie_rule", DiscriminatorConfig::tie_rule}};
}

/**
 * Per-patch outlier scores with shape (samples, grid_h, grid_w), flat index
 * (sample * grid_h + h) * grid_w + w, matching FeatureTensor::patch_index.
 */
struct NoiseScoreMap {
    ScoreKind kind = ScoreKind::nn;
    /// Discriminator that produced the map, for nn/mvg/lof and their rank-normalized forms.
    Discriminator source = Discriminator::nn;
    std::size_t samples = 0;
    std::size_t grid_h = 0;
    std::size_t grid_w = 0;
    std::vector<double> scores;
    DiscriminatorConfig params;

    std::size_t positions() const { return grid_h * grid_w; }

    double at(std::size_t sample, std::size_t h, std::size_t w) const {
        return scores[(sample * grid_h + h) * grid_w + w];
    }

    bool same_shape(const NoiseScoreMap& other) const {
        return samples == other.samples && grid_h == other.grid_h && grid_w == other.grid_w;
    }
};

namespace detail {

inline NoiseScoreMap empty_map(const FeatureTensor& features, ScoreKind kind, Discriminator source,
                               const DiscriminatorConfig& cfg) {
    NoiseScoreMap m;
    m.kind = kind;
    m.source = source;
    m.samples = features.samples();
    m.grid_h = features.grid_h();
    m.grid_w = features.grid_w();
    m.scores.assign(features.shape().patches(), 0.0);
    m.params = cfg;
    return m;
}

/// Symmetric N x N Euclidean distance matrix of one position group, row-major.
/// Each pair is computed once and mirrored so d(i, j) == d(j, i) bitwise.
inline std::vector<double> group_distances(const FeatureTensor& features, std::size_t position) {
    const std::size_t n = features.samples();
    const std::size_t w = features.grid_w();
    const std::size_t h = position / w;
    const std::size_t x = position % w;
    std::vector<double> dist(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        auto pi = features.patch(i, h, x);
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = euclidean_distance(pi, features.patch(j, h, x));
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    return dist;
}

/// Writes group values (one per sample) into the map at a position.
inline void scatter(NoiseScoreMap& map, std::size_t position, const std::vector<double>& values) {
    const std::size_t p = map.positions();
    for (std::size_t i = 0; i < values.size(); ++i) {
        map.scores[i * p + position] = values[i];
    }
}

inline std::vector<double> gather(const NoiseScoreMap& map, std::size_t position) {
    const std::size_t p = map.positions();
    std::vector<double> values(map.samples);
    for (std::size_t i = 0; i < map.samples; ++i) {
        values[i] = map.scores[i * p + position];
    }
    return values;
}

}

/// Distance from each patch to its nearest other-sample patch at the same position.
inline NoiseScoreMap nearest_scores(const FeatureTensor& features, const DiscriminatorConfig& cfg = {}) {
    const std::size_t n = features.samples();
    if (n < 2) {
        throw Error(ErrorKind::InsufficientSamples, "nearest-neighbor scores need at least 2 samples, got " +
                                                        std::to_string(n));
    }
    auto map = detail::empty_map(features, ScoreKind::nn, Discriminator::nn, cfg);
    parallel_for(map.positions(), [&](std::size_t position) {
        const auto dist = detail::group_distances(features, position);
        std::vector<double> best(n, std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i) {
                    best[i] = std::min(best[i], dist[i * n + j]);
                }
            }
        }
        detail::scatter(map, position, best);
    });
    return map;
}

/**
 * Mahalanobis distance of each patch to the Gaussian fitted on its position
 * group (all N samples, the scored one included). The covariance is the
 * unbiased sample covariance plus epsilon * I and is applied through one
 * Cholesky factorization per position.
 */
inline NoiseScoreMap gaussian_scores(const FeatureTensor& features, const DiscriminatorConfig& cfg) {
    cfg.validate();
    const std::size_t n = features.samples();
    const std::size_t c = features.channels();
    if (n < 2) {
        throw Error(ErrorKind::InsufficientSamples, "Gaussian scores need at least 2 samples, got " + std::to_string(n));
    }
    auto map = detail::empty_map(features, ScoreKind::mvg, Discriminator::mvg, cfg);
    parallel_for(map.positions(), [&](std::size_t position) {
        const std::size_t h = position / features.grid_w();
        const std::size_t w = position % features.grid_w();

        Eigen::MatrixXd centered(c, n);
        for (std::size_t i = 0; i < n; ++i) {
            auto patch = features.patch(i, h, w);
            for (std::size_t ch = 0; ch < c; ++ch) {
                centered(Eigen::Index(ch), Eigen::Index(i)) = patch[ch];
            }
        }
        const Eigen::VectorXd mean = centered.rowwise().mean();
        centered.colwise() -= mean;

        Eigen::MatrixXd cov = (centered * centered.transpose()) / static_cast<double>(n - 1);
        cov.diagonal().array() += cfg.epsilon;
        const Eigen::LLT<Eigen::MatrixXd> chol(cov);
        if (chol.info() != Eigen::Success) {
            throw Error(ErrorKind::SolverFailure, "covariance is not positive definite at position " +
                                                      std::to_string(position));
        }
        // L^-1 d for all columns at once; the Mahalanobis norm is its column norm.
        const Eigen::MatrixXd whitened = chol.matrixL().solve(centered);
        std::vector<double> values(n);
        for (std::size_t i = 0; i < n; ++i) {
            values[i] = whitened.col(Eigen::Index(i)).norm();
        }
        detail::scatter(map, position, values);
    });
    return map;
}

/// lrd assigned to a patch whose reachability distances are all zero.
inline constexpr double lof_dense_sentinel = 1e30;

/**
 * Local outlier factor within each position group.
 *
 * k-distance of a patch is the distance to its k-th nearest other patch; its
 * neighborhood holds every other patch within that distance, so ties at the
 * k-th distance are all included. A patch whose reachability distances are
 * all zero gets lrd = lof_dense_sentinel and LOF = 1.
 */
inline NoiseScoreMap lof_scores(const FeatureTensor& features, const DiscriminatorConfig& cfg) {
    cfg.validate();
    const std::size_t n = features.samples();
    const std::size_t k = cfg.lof_k;
    if (n <= k) {
        throw Error(ErrorKind::InsufficientSamples,
                    "LOF with k=" + std::to_string(k) + " needs more than k samples, got " + std::to_string(n));
    }
    auto map = detail::empty_map(features, ScoreKind::lof, Discriminator::lof, cfg);
    parallel_for(map.positions(), [&](std::size_t position) {
        const auto dist = detail::group_distances(features, position);

        std::vector<double> kdist(n);
        std::vector<std::vector<std::size_t>> neighbors(n);
        std::vector<double> row;
        row.reserve(n - 1);
        for (std::size_t i = 0; i < n; ++i) {
            row.clear();
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i) {
                    row.push_back(dist[i * n + j]);
                }
            }
            std::nth_element(row.begin(), row.begin() + std::ptrdiff_t(k - 1), row.end());
            kdist[i] = row[k - 1];
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i && dist[i * n + j] <= kdist[i]) {
                    neighbors[i].push_back(j);
                }
            }
        }

        std::vector<double> lrd(n);
        for (std::size_t i = 0; i < n; ++i) {
            double reach = 0.0;
            for (auto b : neighbors[i]) {
                reach += std::max(kdist[b], dist[i * n + b]);
            }
            lrd[i] = reach > 0.0 ? static_cast<double>(neighbors[i].size()) / reach : lof_dense_sentinel;
        }

        std::vector<double> values(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (lrd[i] == lof_dense_sentinel) {
                values[i] = 1.0;
                continue;
            }
            double sum = 0.0;
            for (auto b : neighbors[i]) {
                sum += lrd[b];
            }
            values[i] = sum / (static_cast<double>(neighbors[i].size()) * lrd[i]);
        }
        detail::scatter(map, position, values);
    });
    return map;
}

/// Average ranks (1-based, ascending) of `values`, ties share the mean of their range.
inline std::vector<double> average_ranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    for (std::size_t start = 0; start < n;) {
        std::size_t end = start + 1;
        while (end < n && values[order[end]] == values[order[start]]) {
            ++end;
        }
        // ranks start+1 .. end, mean = (start + 1 + end) / 2
        const double rank = 0.5 * static_cast<double>(start + 1 + end);
        for (std::size_t t = start; t < end; ++t) {
            ranks[order[t]] = rank;
        }
        start = end;
    }
    return ranks;
}

/// Rank(W) / N within each position group; output in (0, 1].
inline NoiseScoreMap rank_normalize(const NoiseScoreMap& map) {
    if (map.kind != ScoreKind::nn && map.kind != ScoreKind::mvg && map.kind != ScoreKind::lof) {
        throw Error(ErrorKind::InvalidArgument,
                    "rank_normalize expects a raw discriminator map, got " + std::string(to_string(map.kind)));
    }
    NoiseScoreMap out = map;
    out.kind = ScoreKind::rank_normalized;
    const double n = static_cast<double>(map.samples);
    for (std::size_t position = 0; position < map.positions(); ++position) {
        auto ranks = average_ranks(detail::gather(map, position));
        for (auto& r : ranks) {
            r /= n;
        }
        detail::scatter(out, position, ranks);
    }
    return out;
}

/// Selector-weighted mean of rank-normalized maps; maps whose source is not selected are ignored.
inline NoiseScoreMap fuse_scores(const std::vector<NoiseScoreMap>& maps, const DiscriminatorConfig& cfg) {
    const NoiseScoreMap* first = nullptr;
    std::size_t used = 0;
    for (const auto& m : maps) {
        if (m.kind != ScoreKind::rank_normalized) {
            throw Error(ErrorKind::InvalidArgument, "fuse_scores expects rank-normalized maps");
        }
        if (first != nullptr && !m.same_shape(*first)) {
            throw Error(ErrorKind::DimensionMismatch, "fuse_scores: score maps differ in shape");
        }
        first = first ? first : &m;
        used += cfg.selectors.selected(m.source) ? 1 : 0;
    }
    if (used == 0) {
        throw Error(ErrorKind::EmptyInput, "fuse_scores: no selected map among the inputs");
    }
    NoiseScoreMap out = *first;
    out.kind = ScoreKind::fused;
    out.params = cfg;
    std::fill(out.scores.begin(), out.scores.end(), 0.0);
    for (const auto& m : maps) {
        if (!cfg.selectors.selected(m.source)) {
            continue;
        }
        for (std::size_t i = 0; i < out.scores.size(); ++i) {
            out.scores[i] += m.scores[i];
        }
    }
    for (auto& s : out.scores) {
        s /= static_cast<double>(used);
    }
    return out;
}

inline NoiseScoreMap discriminator_scores(Discriminator d, const FeatureTensor& features,
                                          const DiscriminatorConfig& cfg) {
    switch (d) {
    case Discriminator::nn: return nearest_scores(features, cfg);
    case Discriminator::mvg: return gaussian_scores(features, cfg);
    case Discriminator::lof: return lof_scores(features, cfg);
    }
    throw Error(ErrorKind::InvalidArgument, "unknown discriminator");
}

/// Wall-clock time spent per discriminator, filled by noise_scores().
struct DiscriminatorTiming {
    Discriminator which;
    double milliseconds;
};

/**
 * The map that drives filtering and soft weights:
 *  - no selector: uniform scores of 1 (no denoising, unit weights);
 *  - one selector: that discriminator's raw scores;
 *  - several: rank-normalize each and fuse.
 */
inline NoiseScoreMap noise_scores(const FeatureTensor& features, const DiscriminatorConfig& cfg,
                                  std::vector<DiscriminatorTiming>* timing = nullptr) {
    cfg.validate();
    if (cfg.selectors.count() == 0) {
        auto map = detail::empty_map(features, ScoreKind::uniform, Discriminator::nn, cfg);
        std::fill(map.scores.begin(), map.scores.end(), 1.0);
        return map;
    }
    std::vector<NoiseScoreMap> maps;
    for (auto d : {Discriminator::nn, Discriminator::mvg, Discriminator::lof}) {
        if (!cfg.selectors.selected(d)) {
            continue;
        }
        const auto start = std::chrono::steady_clock::now();
        maps.push_back(discriminator_scores(d, features, cfg));
        const std::chrono::duration<double, std::milli> elapsed = std::chrono::steady_clock::now() - start;
        if (timing != nullptr) {
            timing->push_back({d, elapsed.count()});
        }
    }
    if (maps.size() == 1) {
        return std::move(maps.front());
    }
    for (auto& m : maps) {
        m = rank_normalize(m);
    }
    return fuse_scores(maps, cfg);
}

}

#endif
