#ifndef SOFTPATCH_EVAL_HPP
#define SOFTPATCH_EVAL_HPP

#include "method.hpp"
#include "scoring.hpp"
#include "synthetic.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

namespace softpatch {

struct NoiseInjectionSpec {
    double ratio = 0.0;
    OverlapMode mode = OverlapMode::overlap;
    std::uint64_t seed = 0;
    /// Recorded only; the image augmentation itself belongs to feature extraction.
    bool augmentation_hook = false;
};

/// k solving k = ratio * (n_clean + k), rounded half up.
inline std::size_t injected_count(double ratio, std::size_t n_clean) {
    if (!(ratio >= 0.0 && ratio < 1.0)) {
        throw Error(ErrorKind::InfeasibleRatio, "noise ratio must lie in [0, 1)");
    }
    const double k = ratio * static_cast<double>(n_clean) / (1.0 - ratio);
    return static_cast<std::size_t>(std::floor(k + 0.5));
}

/**
 * Moves k seeded-random anomalous test records into the training manifest as
 * injected noise. The normal training records are kept as they are. In
 * no_overlap mode the chosen records leave the test manifest; in overlap mode
 * they stay in both.
 */
inline std::pair<DatasetManifest, DatasetManifest> build_noisy_split(const DatasetManifest& clean_train,
                                                                     const DatasetManifest& test,
                                                                     const NoiseInjectionSpec& spec) {
    if (spec.mode == OverlapMode::none) {
        throw Error(ErrorKind::InvalidArgument, "noise injection mode must be no_overlap or overlap");
    }
    const std::size_t k = injected_count(spec.ratio, clean_train.records.size());
    if (k == 0) {
        return {clean_train, test};
    }

    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < test.records.size(); ++i) {
        if (test.records[i].label == Label::anomalous) {
            pool.push_back(i);
        }
    }
    const bool no_overlap = spec.mode == OverlapMode::no_overlap;
    if (k > pool.size() || (no_overlap && k >= pool.size())) {
        throw Error(ErrorKind::InfeasibleRatio,
                    "ratio " + std::to_string(spec.ratio) + " needs " + std::to_string(k) + " anomalous samples" +
                        (no_overlap ? " plus one left for testing" : "") + ", pool has " +
                        std::to_string(pool.size()));
    }

    SplitMix64 rng(spec.seed);
    rng.shuffle(pool);
    pool.resize(k);
    std::sort(pool.begin(), pool.end());

    DatasetManifest train = clean_train;
    train.split = Split::train;
    train.overlap_mode = spec.mode;
    train.seed = spec.seed;
    for (auto i : pool) {
        SampleRecord r = test.records[i];
        r.origin = Origin::injected_noise;
        train.records.push_back(std::move(r));
    }
    train.noise_ratio = static_cast<double>(k) / static_cast<double>(train.records.size());

    DatasetManifest out_test = test;
    out_test.overlap_mode = spec.mode;
    out_test.noise_ratio = spec.ratio;
    out_test.seed = spec.seed;
    if (no_overlap) {
        std::set<std::size_t> chosen(pool.begin(), pool.end());
        out_test.records.clear();
        for (std::size_t i = 0; i < test.records.size(); ++i) {
            if (!chosen.count(i)) {
                out_test.records.push_back(test.records[i]);
            }
        }
    }
    validate(train);
    return {std::move(train), std::move(out_test)};
}

namespace detail {

/// 2 * concordant + ties and #pos * #neg, exact in integers.
inline std::pair<std::uint64_t, std::uint64_t> mann_whitney_counts(std::span<const double> scores,
                                                                   std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) {
        throw Error(ErrorKind::DimensionMismatch, "auroc: scores and labels differ in length");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    for (double s : scores) {
        if (std::isnan(s)) {
            throw Error(ErrorKind::InvalidArgument, "auroc: NaN score");
        }
    }
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

    std::uint64_t twice = 0;
    std::uint64_t neg_below = 0;
    std::uint64_t pos_total = 0;
    for (std::size_t start = 0; start < order.size();) {
        std::size_t end = start;
        std::uint64_t pos = 0;
        std::uint64_t neg = 0;
        while (end < order.size() && scores[order[end]] == scores[order[start]]) {
            (labels[order[end]] ? pos : neg) += 1;
            ++end;
        }
        twice += 2 * pos * neg_below + pos * neg;
        neg_below += neg;
        pos_total += pos;
        start = end;
    }
    if (pos_total == 0 || neg_below == 0) {
        throw Error(ErrorKind::UndefinedMetric, "auroc needs both positive and negative labels");
    }
    return {twice, pos_total * neg_below};
}

}

/// Mann-Whitney AUROC: (#concordant + 0.5 #tied) / (#pos * #neg); labels are 0/1.
inline double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    const auto [twice, pairs] = detail::mann_whitney_counts(scores, labels);
    return static_cast<double>(twice) / (2.0 * static_cast<double>(pairs));
}

/// One AUROC over every patch of every test sample.
inline double patch_auroc(std::span<const double> per_patch, std::span<const std::uint8_t> masks) {
    return auroc(per_patch, masks);
}

struct MetricsRow {
    std::string method;
    double ratio = 0.0;
    std::uint64_t seed = 0;
    double image_auroc = 0.0;
    std::optional<double> patch_auroc;
    double runtime_ms = 0.0;
    /// Set when the cell failed; metric columns then carry the tag.
    std::optional<std::string> error;
};

/// A noisy split materialized into tensors.
struct PreparedSplit {
    DatasetManifest train_manifest;
    DatasetManifest test_manifest;
    FeatureTensor train;
    FeatureTensor test;
    std::vector<std::uint8_t> train_masks;
    std::vector<std::uint8_t> test_masks;
};

inline PreparedSplit prepare_split(FeatureResolver& resolver, const DatasetManifest& clean_train,
                                   const DatasetManifest& test, const NoiseInjectionSpec& spec) {
    auto [train_m, test_m] = build_noisy_split(clean_train, test, spec);
    PreparedSplit out;
    out.train = resolver.gather(train_m);
    out.test = resolver.gather(test_m);
    out.train_masks = resolver.gather_masks(train_m, out.train.grid_h(), out.train.grid_w());
    out.test_masks = resolver.gather_masks(test_m, out.test.grid_h(), out.test.grid_w());
    out.train_manifest = std::move(train_m);
    out.test_manifest = std::move(test_m);
    return out;
}

struct CellResult {
    FittedModel model;
    std::vector<double> image_scores;
    PatchScores patch_scores;
    double image_auroc = 0.0;
    std::optional<double> patch_auroc;
};

/// Fits on the split's training tensor and scores its test tensor.
inline CellResult evaluate_split(const MethodConfig& method, const PreparedSplit& split) {
    CellResult r{fit_method(method, split.train), {}, {}, 0.0, std::nullopt};
    r.image_scores = image_scores(score_patches(r.model.image_bank(), split.test));
    r.patch_scores = score_patches(r.model.map_bank(), split.test);

    std::vector<std::uint8_t> labels;
    for (const auto& rec : split.test_manifest.records) {
        labels.push_back(rec.label == Label::anomalous ? 1 : 0);
    }
    r.image_auroc = auroc(r.image_scores, labels);
    try {
        r.patch_auroc = patch_auroc(r.patch_scores.scores, split.test_masks);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::UndefinedMetric) {
            throw;
        }
    }
    return r;
}

/// Where sweep cells get their clean train/test data from.
struct DataSource {
    /// Generated per cell with the cell seed replacing spec.seed.
    std::optional<SyntheticSpec> synthetic;
    std::filesystem::path train_manifest;
    std::filesystem::path test_manifest;
};

struct SweepConfig {
    DataSource data;
    std::vector<MethodConfig> methods;
    std::vector<double> ratios;
    std::vector<std::uint64_t> seeds;
    OverlapMode mode = OverlapMode::overlap;

    std::size_t cells() const { return methods.size() * ratios.size() * seeds.size(); }
};

/// Makes relative refs absolute against `base_dir`.
inline DatasetManifest absolutize_refs(DatasetManifest m, const std::filesystem::path& base_dir) {
    auto fix = [&](std::string& ref) {
        auto parsed = parse_ref(ref);
        std::filesystem::path p(parsed.file);
        if (p.is_relative()) {
            ref = make_ref((base_dir / p).lexically_normal().string(), parsed.index);
        }
    };
    for (auto& r : m.records) {
        fix(r.feature_ref);
        if (r.mask_ref) {
            fix(*r.mask_ref);
        }
    }
    return m;
}

/**
 * Runs one (method, ratio, seed) cell. Library errors become a tagged row;
 * anything else propagates.
 */
inline MetricsRow run_cell(const DataSource& data, const MethodConfig& method, double ratio, std::uint64_t seed,
                           OverlapMode mode) {
    MetricsRow row{method.name, ratio, seed, 0.0, std::nullopt, 0.0, std::nullopt};
    const auto start = std::chrono::steady_clock::now();
    try {
        FeatureResolver resolver;
        DatasetManifest train;
        DatasetManifest test;
        if (data.synthetic) {
            auto spec = *data.synthetic;
            spec.seed = seed;
            auto generated = generate_synthetic_dataset(spec);
            resolver = make_resolver(generated);
            train = std::move(generated.train_manifest);
            test = std::move(generated.test_manifest);
        } else {
            train = absolutize_refs(load_manifest(data.train_manifest), data.train_manifest.parent_path());
            test = absolutize_refs(load_manifest(data.test_manifest), data.test_manifest.parent_path());
        }
        const auto split = prepare_split(resolver, train, test, {ratio, mode, seed, mode == OverlapMode::overlap});
        MethodConfig cell_method = method;
        cell_method.coreset.seed = seed;
        const auto result = evaluate_split(cell_method, split);
        row.image_auroc = result.image_auroc;
        row.patch_auroc = result.patch_auroc;
    } catch (const Error& e) {
        row.error = std::string(to_string(e.kind()));
    }
    const std::chrono::duration<double, std::milli> elapsed = std::chrono::steady_clock::now() - start;
    row.runtime_ms = elapsed.count();
    return row;
}

/// Rows in (method, ratio, seed) order, regardless of how cells are scheduled.
inline std::vector<MetricsRow> sweep(const SweepConfig& cfg,
                                     const std::function<void(const MetricsRow&)>& on_row = nullptr) {
    std::vector<MetricsRow> rows;
    rows.reserve(cfg.cells());
    for (const auto& m : cfg.methods) {
        for (double r : cfg.ratios) {
            for (auto s : cfg.seeds) {
                rows.push_back(run_cell(cfg.data, m, r, s, cfg.mode));
                if (on_row) {
                    on_row(rows.back());
                }
            }
        }
    }
    return rows;
}

inline constexpr const char* csv_header = "method,ratio,seed,image_auroc,patch_auroc,runtime_ms";

inline std::string format_number(double v, int precision) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

inline std::string format_ratio(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

/// With record_runtime false the runtime column is written as 0 so output is byte-stable.
inline void write_csv(std::ostream& out, const std::vector<MetricsRow>& rows, bool record_runtime = true) {
    out << csv_header << '\n';
    for (const auto& r : rows) {
        out << r.method << ',' << format_ratio(r.ratio) << ',' << r.seed << ',';
        if (r.error) {
            out << "error:" << *r.error << ",error:" << *r.error;
        } else {
            out << format_number(r.image_auroc, 6) << ','
                << (r.patch_auroc ? format_number(*r.patch_auroc, 6) : std::string("nan"));
        }
        out << ',' << format_number(record_runtime ? r.runtime_ms : 0.0, 3) << '\n';
    }
}

inline SweepConfig sweep_config_from_json(const schema::json& j, const std::filesystem::path& base_dir = {}) {
    const std::string root;
    schema::require_object(j, root);
    schema::only_keys(j, root, {"schema_version", "data", "method", "methods", "noise"});
    schema::check_version(j, root);

    SweepConfig cfg;
    const auto& data = schema::field(j, root, "data");
    const auto dptr = schema::child(root, "data");
    schema::require_object(data, dptr);
    schema::only_keys(data, dptr, {"synthetic", "train_manifest", "test_manifest"});
    if (data.contains("synthetic")) {
        auto spec_json = data["synthetic"];
        if (spec_json.is_object() && !spec_json.contains("seed")) {
            spec_json["seed"] = 0;
        }
        cfg.data.synthetic = synthetic_spec_from_json(spec_json, schema::child(dptr, "synthetic"));
    } else {
        auto path = [&](const char* key) {
            std::filesystem::path p = schema::get_string(data, dptr, key);
            return p.is_relative() ? base_dir / p : p;
        };
        cfg.data.train_manifest = path("train_manifest");
        cfg.data.test_manifest = path("test_manifest");
    }

    if (j.contains("methods") == j.contains("method")) {
        throw SchemaError("/methods", "exactly one of 'method' or 'methods' is required");
    }
    if (j.contains("method")) {
        cfg.methods.push_back(method_from_json(j["method"], "/method"));
    } else {
        const auto& ms = j["methods"];
        if (!ms.is_array()) {
            throw SchemaError("/methods", "expected an array");
        }
        for (std::size_t i = 0; i < ms.size(); ++i) {
            cfg.methods.push_back(method_from_json(ms[i], schema::child("/methods", i)));
        }
    }

    const auto& noise = schema::field(j, root, "noise");
    const auto nptr = schema::child(root, "noise");
    schema::require_object(noise, nptr);
    schema::only_keys(noise, nptr, {"mode", "ratio", "ratios", "seed", "seeds"});
    const auto mode = schema::get_string(noise, nptr, "mode");
    if (mode == "overlap") {
        cfg.mode = OverlapMode::overlap;
    } else if (mode == "no_overlap") {
        cfg.mode = OverlapMode::no_overlap;
    } else {
        throw SchemaError(schema::child(nptr, "mode"), "expected 'overlap' or 'no_overlap'");
    }
    auto list = [&](const char* one, const char* many, auto getter, auto& out) {
        if (noise.contains(one) == noise.contains(many)) {
            throw SchemaError(schema::child(nptr, many),
                              std::string("exactly one of '") + one + "' or '" + many + "' is required");
        }
        if (noise.contains(one)) {
            out.push_back(getter(noise, nptr, one));
            return;
        }
        const auto& arr = noise[many];
        const auto aptr = schema::child(nptr, many);
        if (!arr.is_array()) {
            throw SchemaError(aptr, "expected an array");
        }
        for (std::size_t i = 0; i < arr.size(); ++i) {
            try {
                out.push_back(getter(schema::json{{"v", arr[i]}}, "", "v"));
            } catch (const SchemaError&) {
                throw SchemaError(schema::child(aptr, i), "invalid list element");
            }
        }
    };
    list("ratio", "ratios", schema::get_number, cfg.ratios);
    list("seed", "seeds", schema::get_unsigned, cfg.seeds);
    return cfg;
}

}

#endif
