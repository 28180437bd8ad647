#ifndef SOFTPATCH_CORESET_HPP
#define SOFTPATCH_CORESET_HPP

#include "binary_io.hpp"
#include "discriminators.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

namespace softpatch {

struct PatchRef {
    std::size_t sample = 0;
    std::size_t h = 0;
    std::size_t w = 0;

    bool operator==(const PatchRef&) const = default;
    auto operator<=>(const PatchRef&) const = default;
};

/// Row-major set of equal-length float vectors.
struct PatchMatrix {
    std::vector<float> data;
    std::size_t dim = 0;

    std::size_t rows() const { return dim == 0 ? 0 : data.size() / dim; }

    std::span<const float> row(std::size_t i) const { return std::span<const float>(data).subspan(i * dim, dim); }

    bool operator==(const PatchMatrix&) const = default;
};

struct CoresetConfig {
    double tau = 0.15;
    double sampling_ratio = 0.10;
    std::optional<std::size_t> projection_dim;
    std::uint64_t seed = 0;

    static constexpr std::string_view weight_normalization = "divide_by_mean";
    static constexpr std::string_view removal_scope = "global";

    void validate() const {
        if (!(tau >= 0.0 && tau < 1.0)) {
            throw Error(ErrorKind::InvalidArgument, "tau must lie in [0, 1)");
        }
        if (!(sampling_ratio > 0.0 && sampling_ratio <= 1.0)) {
            throw Error(ErrorKind::InvalidArgument, "sampling_ratio must lie in (0, 1]");
        }
        if (projection_dim && *projection_dim == 0) {
            throw Error(ErrorKind::InvalidArgument, "projection_dim must be >= 1");
        }
    }

    bool operator==(const CoresetConfig&) const = default;
};

inline schema::json to_json(const CoresetConfig& cfg) {
    return schema::json{{"tau", cfg.tau},
                        {"sampling_ratio", cfg.sampling_ratio},
                        {"projection_dim", cfg.projection_dim ? schema::json(*cfg.projection_dim) : schema::json()},
                        {"seed", cfg.seed},
                        {"weight_normalization", CoresetConfig::weight_normalization},
                        {"removal_scope", CoresetConfig::removal_scope}};
}

/// floor(tau * total), guarded against products like 0.29 * 100 = 28.999999999999996.
inline std::size_t removal_count(double tau, std::size_t total) {
    const double raw = tau * static_cast<double>(total);
    const auto n = static_cast<std::size_t>(std::floor(raw + 1e-9));
    return std::min(n, total);
}

/// ceil(ratio * total) clamped to [1, total], with the same guard.
inline std::size_t selection_count(double ratio, std::size_t total) {
    const double raw = ratio * static_cast<double>(total);
    const auto n = static_cast<std::size_t>(std::ceil(raw - 1e-9));
    return std::clamp<std::size_t>(n, 1, total);
}

struct FilterResult {
    /// Ascending (sample, h, w) order.
    std::vector<PatchRef> retained;
    /// Removal order: score descending, then (sample, h, w) ascending.
    std::vector<PatchRef> removed;
};

/**
 * Removes the floor(tau * N*h*w) patches with the highest scores across the
 * whole training set. Ties go to the lower (sample, h, w) first.
 */
inline FilterResult filter_patches(const FeatureTensor& features, const NoiseScoreMap& scores, double tau) {
    if (scores.samples != features.samples() || scores.grid_h != features.grid_h() ||
        scores.grid_w != features.grid_w()) {
        throw Error(ErrorKind::DimensionMismatch, "score map shape does not match features");
    }
    if (!(tau >= 0.0 && tau < 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "tau must lie in [0, 1)");
    }
    const std::size_t total = scores.scores.size();
    const std::size_t n_remove = removal_count(tau, total);

    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + std::ptrdiff_t(n_remove), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (scores.scores[a] != scores.scores[b]) {
                              return scores.scores[a] > scores.scores[b];
                          }
                          return a < b;
                      });

    auto to_ref = [&](std::size_t flat) {
        return PatchRef{flat / scores.positions(), (flat % scores.positions()) / scores.grid_w,
                        flat % scores.grid_w};
    };
    FilterResult out;
    std::vector<bool> gone(total, false);
    out.removed.reserve(n_remove);
    for (std::size_t i = 0; i < n_remove; ++i) {
        gone[order[i]] = true;
        out.removed.push_back(to_ref(order[i]));
    }
    out.retained.reserve(total - n_remove);
    for (std::size_t flat = 0; flat < total; ++flat) {
        if (!gone[flat]) {
            out.retained.push_back(to_ref(flat));
        }
    }
    return out;
}

/// Dense Gaussian random projection, row-major (input_dim x output_dim).
struct Projection {
    std::size_t input_dim = 0;
    std::size_t output_dim = 0;
    std::vector<float> matrix;

    std::vector<float> apply(std::span<const float> x) const {
        if (x.size() != input_dim) {
            throw Error(ErrorKind::DimensionMismatch, "projection expects dimension " + std::to_string(input_dim) +
                                                          ", got " + std::to_string(x.size()));
        }
        std::vector<double> acc(output_dim, 0.0);
        for (std::size_t i = 0; i < input_dim; ++i) {
            const double xi = x[i];
            const float* row = &matrix[i * output_dim];
            for (std::size_t j = 0; j < output_dim; ++j) {
                acc[j] += xi * static_cast<double>(row[j]);
            }
        }
        return std::vector<float>(acc.begin(), acc.end());
    }

    bool operator==(const Projection&) const = default;
};

/// Entries N(0, 1/output_dim), drawn row-major from SplitMix64(seed ^ projection_stream).
inline constexpr std::uint64_t projection_stream = 0x5052'4F4A'4543'5431ULL;

inline Projection make_projection(std::size_t input_dim, std::size_t output_dim, std::uint64_t seed) {
    if (output_dim == 0 || output_dim > input_dim) {
        throw Error(ErrorKind::InvalidArgument, "projection_dim " + std::to_string(output_dim) +
                                                    " must lie in [1, " + std::to_string(input_dim) + "]");
    }
    SplitMix64 rng(seed ^ projection_stream);
    Projection p{input_dim, output_dim, std::vector<float>(input_dim * output_dim)};
    const double scale = 1.0 / std::sqrt(static_cast<double>(output_dim));
    for (auto& v : p.matrix) {
        v = static_cast<float>(rng.normal() * scale);
    }
    return p;
}

struct ProjectedPatches {
    PatchMatrix patches;
    std::optional<Projection> projection;
};

inline ProjectedPatches project_features(const PatchMatrix& patches, std::optional<std::size_t> projection_dim,
                                         std::uint64_t seed) {
    if (!projection_dim) {
        return {patches, std::nullopt};
    }
    auto projection = make_projection(patches.dim, *projection_dim, seed);
    PatchMatrix out{{}, projection.output_dim};
    out.data.resize(patches.rows() * out.dim);
    parallel_for(patches.rows(), [&](std::size_t i) {
        auto y = projection.apply(patches.row(i));
        std::copy(y.begin(), y.end(), out.data.begin() + std::ptrdiff_t(i * out.dim));
    });
    return {std::move(out), std::move(projection)};
}

/// Below this many points the greedy min-distance update runs on one thread.
inline constexpr std::size_t greedy_parallel_threshold = 1 << 15;

/**
 * Greedy k-center (farthest-point) selection from a given first point: each
 * step picks the unselected point farthest from its nearest selected point,
 * lowest index on ties. Keeps one running min-distance per point, so each
 * step is a single O(M * dim) pass.
 */
inline std::vector<std::size_t> greedy_coreset_from(const PatchMatrix& points, std::size_t count,
                                                    std::size_t start) {
    const std::size_t m = points.rows();
    if (m == 0) {
        throw Error(ErrorKind::EmptyInput, "greedy coreset over an empty patch set");
    }
    if (start >= m) {
        throw Error(ErrorKind::InvalidArgument, "greedy start index out of range");
    }
    count = std::clamp<std::size_t>(count, 1, m);

    std::vector<double> nearest(m, std::numeric_limits<double>::infinity());
    std::vector<bool> taken(m, false);
    std::vector<std::size_t> selected;
    selected.reserve(count);

    auto update = [&](std::size_t center) {
        auto c = points.row(center);
        auto body = [&](std::size_t i) { nearest[i] = std::min(nearest[i], squared_distance(points.row(i), c)); };
        if (m >= greedy_parallel_threshold) {
            parallel_for(m, body);
        } else {
            for (std::size_t i = 0; i < m; ++i) {
                body(i);
            }
        }
    };

    std::size_t next = start;
    while (true) {
        selected.push_back(next);
        taken[next] = true;
        if (selected.size() == count) {
            break;
        }
        update(next);
        double best = -1.0;
        for (std::size_t i = 0; i < m; ++i) {
            if (!taken[i] && nearest[i] > best) {
                best = nearest[i];
                next = i;
            }
        }
    }
    return selected;
}

/// Seeded start: SplitMix64(seed).index(M).
inline std::size_t greedy_start(std::size_t m, std::uint64_t seed) {
    SplitMix64 rng(seed);
    return rng.index(m);
}

inline std::vector<std::size_t> greedy_coreset(const PatchMatrix& points, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio <= 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "sampling ratio must lie in (0, 1]");
    }
    if (points.rows() == 0) {
        throw Error(ErrorKind::EmptyInput, "greedy coreset over an empty patch set");
    }
    return greedy_coreset_from(points, selection_count(ratio, points.rows()), greedy_start(points.rows(), seed));
}

/// Largest distance from any point to its nearest selected point.
inline double coverage_radius(const PatchMatrix& points, const std::vector<std::size_t>& selected) {
    double radius = 0.0;
    for (std::size_t i = 0; i < points.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (auto s : selected) {
            best = std::min(best, squared_distance(points.row(i), points.row(s)));
        }
        radius = std::max(radius, best);
    }
    return std::sqrt(radius);
}

enum class BankTask { single, classification, segmentation };

inline std::string_view to_string(BankTask t) {
    switch (t) {
    case BankTask::single: return "single";
    case BankTask::classification: return "classification";
    case BankTask::segmentation: return "segmentation";
    }
    return "?";
}

/**
 * Coreset patches with per-entry soft weights. Weights are the driving
 * outlier scores of the selected patches divided by their mean; `config` is
 * the full build snapshot.
 */
struct MemoryBank {
    PatchMatrix entries;
    std::vector<double> soft_weights;
    std::vector<PatchRef> provenance;
    std::optional<Projection> projection;
    schema::json config;

    std::size_t size() const { return entries.rows(); }
    std::size_t dim() const { return entries.dim; }
    /// Dimension expected from query patches before projection.
    std::size_t input_dim() const { return projection ? projection->input_dim : entries.dim; }

    bool operator==(const MemoryBank&) const = default;
};

/// Relative floor applied to raw weights before normalization, keeping every weight positive.
inline constexpr double min_relative_weight = 1e-6;

inline std::vector<double> normalize_weights(std::vector<double> raw) {
    if (raw.empty()) {
        return raw;
    }
    double mean = std::accumulate(raw.begin(), raw.end(), 0.0) / static_cast<double>(raw.size());
    if (!(mean > 0.0) || !std::isfinite(mean)) {
        std::fill(raw.begin(), raw.end(), 1.0);
        return raw;
    }
    for (auto& w : raw) {
        w = std::max(w, mean * min_relative_weight);
    }
    mean = std::accumulate(raw.begin(), raw.end(), 0.0) / static_cast<double>(raw.size());
    for (auto& w : raw) {
        w /= mean;
    }
    return raw;
}

/**
 * Filter -> project -> greedy coreset -> soft weights, from a precomputed
 * driving score map.
 */
inline MemoryBank build_memory_bank_from_scores(const FeatureTensor& features, const NoiseScoreMap& scores,
                                                const CoresetConfig& cfg, const DiscriminatorConfig& dcfg,
                                                BankTask task = BankTask::single) {
    cfg.validate();
    if (cfg.projection_dim && *cfg.projection_dim > features.channels()) {
        throw Error(ErrorKind::InvalidArgument, "projection_dim exceeds the feature dimension");
    }
    const auto filtered = filter_patches(features, scores, cfg.tau);

    PatchMatrix retained{{}, features.channels()};
    retained.data.reserve(filtered.retained.size() * features.channels());
    for (const auto& r : filtered.retained) {
        auto p = features.patch(r.sample, r.h, r.w);
        retained.data.insert(retained.data.end(), p.begin(), p.end());
    }

    auto projected = project_features(retained, cfg.projection_dim, cfg.seed);
    const std::size_t start = greedy_start(retained.rows(), cfg.seed);
    const auto picks =
        greedy_coreset_from(projected.patches, selection_count(cfg.sampling_ratio, retained.rows()), start);

    MemoryBank bank;
    bank.entries.dim = projected.patches.dim;
    bank.entries.data.reserve(picks.size() * bank.entries.dim);
    std::vector<double> raw;
    raw.reserve(picks.size());
    for (auto idx : picks) {
        auto row = projected.patches.row(idx);
        bank.entries.data.insert(bank.entries.data.end(), row.begin(), row.end());
        const auto& ref = filtered.retained[idx];
        bank.provenance.push_back(ref);
        raw.push_back(scores.at(ref.sample, ref.h, ref.w));
    }
    bank.soft_weights = normalize_weights(std::move(raw));
    bank.projection = std::move(projected.projection);

    const auto& s = features.shape();
    bank.config = schema::json{{"schema_version", schema::schema_version},
                               {"discriminator", to_json(dcfg)},
                               {"coreset", to_json(cfg)},
                               {"score_kind", to_string(scores.kind)},
                               {"task", to_string(task)},
                               {"greedy_start", start},
                               {"feature_shape", {s.samples, s.grid_h, s.grid_w, s.channels}},
                               {"patches_total", scores.scores.size()},
                               {"patches_removed", filtered.removed.size()},
                               {"entries", picks.size()}};
    return bank;
}

inline MemoryBank build_memory_bank(const FeatureTensor& features, const CoresetConfig& cfg,
                                    const DiscriminatorConfig& dcfg,
                                    std::vector<DiscriminatorTiming>* timing = nullptr) {
    cfg.validate();
    const auto scores = noise_scores(features, dcfg, timing);
    return build_memory_bank_from_scores(features, scores, cfg, dcfg);
}

struct DualBanks {
    MemoryBank classification;
    MemoryBank segmentation;
};

/// Two banks from one fused score map: tau_cls for image scores, tau_seg for anomaly maps.
inline DualBanks build_dual_banks(const FeatureTensor& features, const CoresetConfig& cfg, double tau_seg,
                                  const DiscriminatorConfig& dcfg,
                                  std::vector<DiscriminatorTiming>* timing = nullptr) {
    cfg.validate();
    CoresetConfig seg = cfg;
    seg.tau = tau_seg;
    seg.validate();
    const auto scores = noise_scores(features, dcfg, timing);
    return {build_memory_bank_from_scores(features, scores, cfg, dcfg, BankTask::classification),
            build_memory_bank_from_scores(features, scores, seg, dcfg, BankTask::segmentation)};
}

/**
 * SPMB memory-bank file, little-endian:
 *
 *   "SPMB", u8 version (1)
 *   u64 config length, config JSON bytes (UTF-8, keys sorted)
 *   u64 projection input dim, u64 projection output dim (0 = none),
 *       input*output float32 (row-major)
 *   u64 entry count M, u64 entry dim D, M*D float32 entries
 *   M float64 soft weights
 *   M x (u64 sample, u64 h, u64 w) provenance
 */
inline constexpr std::string_view spmb_magic = "SPMB";
inline constexpr std::uint8_t spmb_version = 1;

inline std::vector<char> encode_memory_bank(const MemoryBank& bank) {
    if (bank.soft_weights.size() != bank.size() || bank.provenance.size() != bank.size()) {
        throw Error(ErrorKind::InvalidArgument, "memory bank sections disagree in length");
    }
    binary::Writer out;
    out.bytes(spmb_magic);
    out.u8(spmb_version);
    const std::string cfg = bank.config.dump();
    out.u64(cfg.size());
    out.bytes(cfg);
    if (bank.projection) {
        out.u64(bank.projection->input_dim);
        out.u64(bank.projection->output_dim);
        out.f32s(bank.projection->matrix);
    } else {
        out.u64(bank.entries.dim);
        out.u64(0);
    }
    out.u64(bank.size());
    out.u64(bank.entries.dim);
    out.f32s(bank.entries.data);
    for (double w : bank.soft_weights) {
        out.f64(w);
    }
    for (const auto& p : bank.provenance) {
        out.u64(p.sample);
        out.u64(p.h);
        out.u64(p.w);
    }
    return out.buffer();
}

inline MemoryBank decode_memory_bank(std::span<const char> bytes, const std::string& where = "SPMB") {
    binary::Reader in(bytes);
    constexpr auto header = ErrorKind::MalformedHeader;
    constexpr auto payload = ErrorKind::TruncatedPayload;
    if (in.bytes(4, header, where + " magic") != spmb_magic) {
        throw Error(header, where + ": bad magic, expected SPMB");
    }
    const auto version = in.u8(header, where + " version");
    if (version != spmb_version) {
        throw Error(ErrorKind::UnsupportedVersion, where + ": version " + std::to_string(version));
    }
    MemoryBank bank;
    const auto cfg_len = in.u64(payload, where + " config length");
    const auto cfg = in.bytes(cfg_len, payload, where + " config");
    try {
        bank.config = schema::json::parse(cfg);
    } catch (const schema::json::parse_error& e) {
        throw Error(header, where + ": config is not valid JSON");
    }

    const auto in_dim = in.u64(payload, where + " projection");
    const auto out_dim = in.u64(payload, where + " projection");
    if (out_dim > 0) {
        std::uint64_t n = 0;
        if (!binary::checked_mul(in_dim, out_dim, n)) {
            throw Error(header, where + ": projection size overflows");
        }
        bank.projection = Projection{in_dim, out_dim, in.f32s(n, payload, where + " projection matrix")};
    }

    const auto count = in.u64(payload, where + " entry count");
    const auto dim = in.u64(payload, where + " entry dim");
    std::uint64_t n = 0;
    if (dim == 0 || !binary::checked_mul(count, dim, n)) {
        throw Error(header, where + ": invalid entry shape");
    }
    if (bank.projection && bank.projection->output_dim != dim) {
        throw Error(header, where + ": projection output dim does not match entry dim");
    }
    bank.entries.dim = dim;
    bank.entries.data = in.f32s(n, payload, where + " entries");
    if (count > in.remaining() / 8) {
        throw Error(payload, where + " weights: need " + std::to_string(count) + " values");
    }
    bank.soft_weights.resize(count);
    for (auto& w : bank.soft_weights) {
        w = in.f64(payload, where + " weights");
    }
    if (count > in.remaining() / 24) {
        throw Error(payload, where + " provenance: need " + std::to_string(count) + " triples");
    }
    bank.provenance.resize(count);
    for (auto& p : bank.provenance) {
        p.sample = in.u64(payload, where + " provenance");
        p.h = in.u64(payload, where + " provenance");
        p.w = in.u64(payload, where + " provenance");
    }
    if (in.remaining() != 0) {
        throw Error(header, where + ": trailing bytes after provenance");
    }
    for (double w : bank.soft_weights) {
        if (!(w > 0.0) || !std::isfinite(w)) {
            throw Error(ErrorKind::NonFiniteValue, where + ": soft weights must be finite and positive");
        }
    }
    return bank;
}

inline void save_memory_bank(const MemoryBank& bank, const std::filesystem::path& path) {
    binary::write_bytes(path, encode_memory_bank(bank));
}

inline MemoryBank load_memory_bank(const std::filesystem::path& path) {
    return decode_memory_bank(binary::slurp(path), path.string());
}

}

#endif
