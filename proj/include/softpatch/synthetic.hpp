#ifndef SOFTPATCH_SYNTHETIC_HPP
#define SOFTPATCH_SYNTHETIC_HPP

#include "manifest.hpp"
#include "rng.hpp"

#include <cmath>
#include <limits>

namespace softpatch {

/**
 * Parameters of the synthetic patch-feature generator.
 *
 * Shifts have magnitude anomaly_offset * cluster_sigma * sqrt(channels), i.e.
 * the offset is measured in units of the typical within-cluster patch spread.
 */
struct SyntheticSpec {
    std::size_t n_normal = 100;
    std::size_t n_anomalous = 20;
    std::size_t n_test_normal = 20;
    std::size_t grid_h = 4;
    std::size_t grid_w = 4;
    std::size_t channels = 8;
    double cluster_sigma = 0.1;
    double anomaly_offset = 10.0;
    double anomaly_patch_fraction = 0.25;
    std::size_t clusters_per_position = 2;
    std::uint64_t seed = 0;

    /// Every shifted patch must be farther than this from all cluster means at its position.
    double separation_threshold() const {
        return 0.5 * anomaly_offset * cluster_sigma * std::sqrt(static_cast<double>(channels));
    }

    std::size_t shifted_positions() const {
        const auto p = static_cast<double>(grid_h * grid_w);
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(anomaly_patch_fraction * p)));
    }

    void validate() const {
        auto bad = [](const char* field, const std::string& why) { throw SchemaError(std::string("/") + field, why); };
        if (n_normal < 1) bad("n_normal", "must be >= 1");
        if (n_anomalous + n_test_normal < 1) bad("n_anomalous", "test set must not be empty");
        if (grid_h < 1 || grid_w < 1) bad("grid", "dimensions must be >= 1");
        if (channels < 1) bad("channels", "must be >= 1");
        if (!(cluster_sigma > 0.0) || !std::isfinite(cluster_sigma)) bad("cluster_sigma", "must be positive");
        if (!(anomaly_offset > 0.0) || !std::isfinite(anomaly_offset)) bad("anomaly_offset", "must be positive");
        if (!(anomaly_patch_fraction > 0.0 && anomaly_patch_fraction <= 1.0))
            bad("anomaly_patch_fraction", "must lie in (0, 1]");
        if (clusters_per_position < 1) bad("clusters_per_position", "must be >= 1");
    }
};

inline schema::json to_json(const SyntheticSpec& s) {
    return schema::json{{"schema_version", schema::schema_version},
                        {"n_normal", s.n_normal},
                        {"n_anomalous", s.n_anomalous},
                        {"n_test_normal", s.n_test_normal},
                        {"grid", {s.grid_h, s.grid_w}},
                        {"channels", s.channels},
                        {"cluster_sigma", s.cluster_sigma},
                        {"anomaly_offset", s.anomaly_offset},
                        {"anomaly_patch_fraction", s.anomaly_patch_fraction},
                        {"clusters_per_position", s.clusters_per_position},
                        {"seed", s.seed}};
}

inline SyntheticSpec synthetic_spec_from_json(const schema::json& j, const std::string& ptr = "") {
    schema::require_object(j, ptr);
    schema::only_keys(j, ptr,
                      {"schema_version", "n_normal", "n_anomalous", "n_test_normal", "grid", "channels",
                       "cluster_sigma", "anomaly_offset", "anomaly_patch_fraction", "clusters_per_position", "seed"});
    if (j.contains("schema_version")) {
        schema::check_version(j, ptr);
    }
    SyntheticSpec s;
    s.n_normal = schema::get_unsigned(j, ptr, "n_normal");
    s.n_anomalous = schema::get_unsigned(j, ptr, "n_anomalous");
    s.n_test_normal = schema::optional<std::uint64_t>(j, ptr, "n_test_normal", schema::get_unsigned).value_or(20);
    const auto& grid = schema::field(j, ptr, "grid");
    if (!grid.is_array() || grid.size() != 2 || !grid[0].is_number_unsigned() || !grid[1].is_number_unsigned()) {
        throw SchemaError(schema::child(ptr, "grid"), "expected [h, w] with non-negative integers");
    }
    s.grid_h = grid[0].get<std::size_t>();
    s.grid_w = grid[1].get<std::size_t>();
    s.channels = schema::get_unsigned(j, ptr, "channels");
    s.cluster_sigma = schema::get_number(j, ptr, "cluster_sigma");
    s.anomaly_offset = schema::get_number(j, ptr, "anomaly_offset");
    s.anomaly_patch_fraction = schema::get_number(j, ptr, "anomaly_patch_fraction");
    s.clusters_per_position = schema::get_unsigned(j, ptr, "clusters_per_position");
    s.seed = schema::get_unsigned(j, ptr, "seed");
    s.validate();
    return s;
}

struct SyntheticDataset {
    FeatureTensor train;
    FeatureTensor test;
    /// (n_anomalous, h, w, 1), 1.0 at shifted positions.
    FeatureTensor test_masks;
    DatasetManifest train_manifest;
    DatasetManifest test_manifest;
    /// Cluster means, (position, cluster, channel).
    std::vector<double> cluster_means;
};

inline constexpr const char* synthetic_train_file = "train.spf";
inline constexpr const char* synthetic_test_file = "test.spf";
inline constexpr const char* synthetic_mask_file = "test_masks.spf";

namespace detail {

inline void draw_normal_sample(SplitMix64& rng, const SyntheticSpec& spec, const std::vector<double>& means,
                               std::span<float> out) {
    const std::size_t c = spec.channels;
    for (std::size_t p = 0; p < spec.grid_h * spec.grid_w; ++p) {
        const std::size_t k = rng.index(spec.clusters_per_position);
        const double* mean = &means[(p * spec.clusters_per_position + k) * c];
        for (std::size_t ch = 0; ch < c; ++ch) {
            out[p * c + ch] = static_cast<float>(mean[ch] + spec.cluster_sigma * rng.normal());
        }
    }
}

inline double min_distance_to_means(std::span<const float> patch, const double* means, std::size_t clusters) {
    double best = std::numeric_limits<double>::infinity();
    const std::size_t c = patch.size();
    for (std::size_t k = 0; k < clusters; ++k) {
        double acc = 0.0;
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double d = static_cast<double>(patch[ch]) - means[k * c + ch];
            acc += d * d;
        }
        best = std::min(best, std::sqrt(acc));
    }
    return best;
}

}

/**
 * Draw order, all from one SplitMix64(seed) stream:
 *  1. cluster means, position-major then cluster then channel, each N(0, 1);
 *  2. training normals, then test normals, then test anomalous samples. Per
 *     sample and position: cluster index, then c Gaussian channel draws;
 *  3. for each anomalous sample right after its normal draw: a shuffle of
 *     the position indices (first shifted_positions() are shifted), then per
 *     shifted position a direction of c Gaussian draws, redrawn until the
 *     shifted patch clears separation_threshold().
 */
inline SyntheticDataset generate_synthetic_dataset(const SyntheticSpec& spec) {
    spec.validate();
    SplitMix64 rng(spec.seed);
    const std::size_t c = spec.channels;
    const std::size_t positions = spec.grid_h * spec.grid_w;

    SyntheticDataset out;
    out.cluster_means.resize(positions * spec.clusters_per_position * c);
    for (auto& v : out.cluster_means) {
        v = rng.normal();
    }

    TensorShape train_shape{spec.n_normal, spec.grid_h, spec.grid_w, c};
    std::vector<float> train(train_shape.size());
    const std::size_t sample_stride = positions * c;
    for (std::size_t i = 0; i < spec.n_normal; ++i) {
        detail::draw_normal_sample(rng, spec, out.cluster_means,
                                   std::span<float>(train).subspan(i * sample_stride, sample_stride));
    }

    const std::size_t n_test = spec.n_test_normal + spec.n_anomalous;
    TensorShape test_shape{n_test, spec.grid_h, spec.grid_w, c};
    std::vector<float> test(test_shape.size());
    for (std::size_t i = 0; i < spec.n_test_normal; ++i) {
        detail::draw_normal_sample(rng, spec, out.cluster_means,
                                   std::span<float>(test).subspan(i * sample_stride, sample_stride));
    }

    std::vector<float> masks(std::max<std::size_t>(spec.n_anomalous, 1) * positions, 0.0f);
    const double shift = spec.anomaly_offset * spec.cluster_sigma * std::sqrt(static_cast<double>(c));
    const double threshold = spec.separation_threshold();
    std::vector<float> candidate(c);
    for (std::size_t a = 0; a < spec.n_anomalous; ++a) {
        auto row = std::span<float>(test).subspan((spec.n_test_normal + a) * sample_stride, sample_stride);
        detail::draw_normal_sample(rng, spec, out.cluster_means, row);

        std::vector<std::size_t> order(positions);
        for (std::size_t p = 0; p < positions; ++p) {
            order[p] = p;
        }
        rng.shuffle(order);
        for (std::size_t s = 0; s < spec.shifted_positions(); ++s) {
            const std::size_t p = order[s];
            const double* means = &out.cluster_means[p * spec.clusters_per_position * c];
            auto patch = row.subspan(p * c, c);
            bool placed = false;
            for (int attempt = 0; attempt < 256 && !placed; ++attempt) {
                std::vector<double> dir(c);
                double norm = 0.0;
                for (auto& d : dir) {
                    d = rng.normal();
                    norm += d * d;
                }
                norm = std::sqrt(norm);
                if (norm == 0.0) {
                    continue;
                }
                for (std::size_t ch = 0; ch < c; ++ch) {
                    candidate[ch] = static_cast<float>(patch[ch] + shift * dir[ch] / norm);
                }
                placed = detail::min_distance_to_means(candidate, means, spec.clusters_per_position) > threshold;
            }
            if (!placed) {
                throw Error(ErrorKind::InvalidArgument,
                            "synthetic self-check failed: cannot separate a shifted patch; increase anomaly_offset");
            }
            std::copy(candidate.begin(), candidate.end(), patch.begin());
            masks[a * positions + p] = 1.0f;
        }
    }

    out.train = FeatureTensor(train_shape, std::move(train));
    out.test = FeatureTensor(test_shape, std::move(test));
    out.test_masks = FeatureTensor({std::max<std::size_t>(spec.n_anomalous, 1), spec.grid_h, spec.grid_w, 1},
                                   std::move(masks));

    auto pad = [](std::size_t i) {
        std::string s = std::to_string(i);
        return std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
    };
    out.train_manifest = {"synthetic", Split::train, 0.0, OverlapMode::none, {}, spec.seed};
    for (std::size_t i = 0; i < spec.n_normal; ++i) {
        out.train_manifest.records.push_back(
            {"train_" + pad(i), Label::normal, make_ref(synthetic_train_file, i), std::nullopt, Origin::train_clean});
    }
    out.test_manifest = {"synthetic", Split::test, 0.0, OverlapMode::none, {}, spec.seed};
    for (std::size_t i = 0; i < spec.n_test_normal; ++i) {
        out.test_manifest.records.push_back(
            {"test_normal_" + pad(i), Label::normal, make_ref(synthetic_test_file, i), std::nullopt, Origin::test});
    }
    for (std::size_t a = 0; a < spec.n_anomalous; ++a) {
        out.test_manifest.records.push_back({"test_anomalous_" + pad(a), Label::anomalous,
                                             make_ref(synthetic_test_file, spec.n_test_normal + a),
                                             make_ref(synthetic_mask_file, a), Origin::test});
    }
    return out;
}

/// A resolver preloaded with the dataset's in-memory tensors.
inline FeatureResolver make_resolver(const SyntheticDataset& data) {
    FeatureResolver r;
    r.add(synthetic_train_file, data.train);
    r.add(synthetic_test_file, data.test);
    r.add(synthetic_mask_file, data.test_masks);
    return r;
}

}

#endif
