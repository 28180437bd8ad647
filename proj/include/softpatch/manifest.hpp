#ifndef SOFTPATCH_MANIFEST_HPP
#define SOFTPATCH_MANIFEST_HPP

#include "feature_io.hpp"
#include "json_schema.hpp"

#include <charconv>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace softpatch {

enum class Label { normal, anomalous };
enum class Origin { train_clean, injected_noise, test };
enum class Split { train, test };
enum class OverlapMode { none, no_overlap, overlap };

NLOHMANN_JSON_SERIALIZE_ENUM(Label, {{Label::normal, "normal"}, {Label::anomalous, "anomalous"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Origin, {{Origin::train_clean, "train_clean"},
                                      {Origin::injected_noise, "injected_noise"},
                                      {Origin::test, "test"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Split, {{Split::train, "train"}, {Split::test, "test"}})
NLOHMANN_JSON_SERIALIZE_ENUM(OverlapMode, {{OverlapMode::none, "none"},
                                           {OverlapMode::no_overlap, "no_overlap"},
                                           {OverlapMode::overlap, "overlap"}})

/**
 * Feature and mask refs have the form "<file>#<sample index>". Relative file
 * paths resolve against the directory of the manifest that holds them.
 */
struct SampleRecord {
    std::string id;
    Label label = Label::normal;
    std::string feature_ref;
    std::optional<std::string> mask_ref;
    Origin origin = Origin::train_clean;

    bool operator==(const SampleRecord&) const = default;
};

struct DatasetManifest {
    std::string name;
    Split split = Split::train;
    double noise_ratio = 0.0;
    OverlapMode overlap_mode = OverlapMode::none;
    std::vector<SampleRecord> records;
    std::uint64_t seed = 0;

    std::size_t count(Origin origin) const {
        std::size_t n = 0;
        for (const auto& r : records) {
            n += r.origin == origin ? 1 : 0;
        }
        return n;
    }

    bool operator==(const DatasetManifest&) const = default;
};

struct FeatureRef {
    std::string file;
    std::size_t index = 0;
};

inline FeatureRef parse_ref(const std::string& ref) {
    const auto hash = ref.rfind('#');
    if (hash == std::string::npos || hash == 0 || hash + 1 == ref.size()) {
        throw Error(ErrorKind::InvalidArgument, "ref '" + ref + "' is not of the form <file>#<index>");
    }
    FeatureRef out{ref.substr(0, hash), 0};
    const char* first = ref.data() + hash + 1;
    const char* last = ref.data() + ref.size();
    auto [ptr, ec] = std::from_chars(first, last, out.index);
    if (ec != std::errc() || ptr != last) {
        throw Error(ErrorKind::InvalidArgument, "ref '" + ref + "' has a non-numeric index");
    }
    return out;
}

inline std::string make_ref(const std::string& file, std::size_t index) { return file + "#" + std::to_string(index); }

/// Checks record-level and manifest-level invariants. `ptr` prefixes error pointers.
inline void validate(const DatasetManifest& m, const std::string& ptr = "") {
    if (!(m.noise_ratio >= 0.0 && m.noise_ratio <= 1.0)) {
        throw SchemaError(schema::child(ptr, "noise_ratio"), "must lie in [0, 1]");
    }
    std::set<std::string> seen;
    for (std::size_t i = 0; i < m.records.size(); ++i) {
        const auto& r = m.records[i];
        const auto rptr = schema::child(schema::child(ptr, "records"), i);
        if (!seen.insert(r.id).second) {
            throw Error(ErrorKind::DuplicateId, schema::child(rptr, "id") + ": duplicate id '" + r.id + "'");
        }
        if (r.mask_ref && r.label != Label::anomalous) {
            throw SchemaError(schema::child(rptr, "mask_ref"), "mask_ref requires label 'anomalous'");
        }
        try {
            parse_ref(r.feature_ref);
            if (r.mask_ref) {
                parse_ref(*r.mask_ref);
            }
        } catch (const Error& e) {
            throw SchemaError(rptr, e.what());
        }
    }
    if (m.records.empty()) {
        if (m.noise_ratio != 0.0) {
            throw SchemaError(schema::child(ptr, "noise_ratio"), "must be 0 for an empty manifest");
        }
        return;
    }
    if (m.split == Split::train) {
        const double n = static_cast<double>(m.records.size());
        const double actual = static_cast<double>(m.count(Origin::injected_noise)) / n;
        if (std::abs(actual - m.noise_ratio) > 1.0 / n + 1e-12) {
            throw SchemaError(schema::child(ptr, "noise_ratio"),
                              "declared " + std::to_string(m.noise_ratio) + " but records give " +
                                  std::to_string(actual));
        }
    }
}

inline schema::json to_json(const DatasetManifest& m) {
    using schema::json;
    json records = json::array();
    for (const auto& r : m.records) {
        json jr = {{"id", r.id}, {"label", r.label}, {"feature_ref", r.feature_ref}, {"origin", r.origin}};
        if (r.mask_ref) {
            jr["mask_ref"] = *r.mask_ref;
        }
        records.push_back(std::move(jr));
    }
    return json{{"schema_version", schema::schema_version},
                {"name", m.name},
                {"split", m.split},
                {"noise_ratio", m.noise_ratio},
                {"overlap_mode", m.overlap_mode},
                {"seed", m.seed},
                {"records", std::move(records)}};
}

namespace detail {
template<typename E>
E get_enum(const schema::json& j, const std::string& ptr, std::string_view key,
           std::initializer_list<std::pair<E, std::string_view>> names) {
    const auto s = schema::get_string(j, ptr, key);
    for (const auto& [value, name] : names) {
        if (s == name) {
            return value;
        }
    }
    throw SchemaError(schema::child(ptr, key), "invalid value '" + s + "'");
}
}

inline DatasetManifest manifest_from_json(const schema::json& j) {
    const std::string root;
    schema::require_object(j, root);
    schema::only_keys(j, root, {"schema_version", "name", "split", "noise_ratio", "overlap_mode", "seed", "records"});
    schema::check_version(j, root);

    DatasetManifest m;
    m.name = schema::get_string(j, root, "name");
    m.split = detail::get_enum<Split>(j, root, "split", {{Split::train, "train"}, {Split::test, "test"}});
    m.noise_ratio = schema::get_number(j, root, "noise_ratio");
    m.overlap_mode = detail::get_enum<OverlapMode>(
        j, root, "overlap_mode",
        {{OverlapMode::none, "none"}, {OverlapMode::no_overlap, "no_overlap"}, {OverlapMode::overlap, "overlap"}});
    m.seed = schema::get_unsigned(j, root, "seed");

    const auto& records = schema::field(j, root, "records");
    const auto rptr = schema::child(root, "records");
    if (!records.is_array()) {
        throw SchemaError(rptr, "expected an array");
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& jr = records[i];
        const auto p = schema::child(rptr, i);
        schema::require_object(jr, p);
        schema::only_keys(jr, p, {"id", "label", "feature_ref", "mask_ref", "origin"});
        SampleRecord r;
        r.id = schema::get_string(jr, p, "id");
        r.label = detail::get_enum<Label>(jr, p, "label", {{Label::normal, "normal"}, {Label::anomalous, "anomalous"}});
        r.feature_ref = schema::get_string(jr, p, "feature_ref");
        r.mask_ref = schema::optional<std::string>(jr, p, "mask_ref", schema::get_string);
        r.origin = detail::get_enum<Origin>(
            jr, p, "origin",
            {{Origin::train_clean, "train_clean"}, {Origin::injected_noise, "injected_noise"}, {Origin::test, "test"}});
        m.records.push_back(std::move(r));
    }
    validate(m, root);
    return m;
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
    return manifest_from_json(schema::parse_file(path));
}

inline void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    validate(manifest);
    schema::write_file(to_json(manifest), path);
}

/**
 * Loads SPF1 files named by refs, caching each file once. Relative paths are
 * resolved against `base_dir`.
 */
class FeatureResolver {
public:
    explicit FeatureResolver(std::filesystem::path base_dir = {}) : base_(std::move(base_dir)) {}

    /// Registers an in-memory tensor under a file name, bypassing disk.
    void add(const std::string& file, FeatureTensor tensor) { cache_[file] = std::move(tensor); }

    const FeatureTensor& file(const std::string& name) {
        auto it = cache_.find(name);
        if (it != cache_.end()) {
            return it->second;
        }
        std::filesystem::path p(name);
        if (p.is_relative()) {
            p = base_ / p;
        }
        return cache_.emplace(name, read_feature_file(p)).first->second;
    }

    /// Stacks the referenced samples, in record order, into one tensor.
    FeatureTensor gather(const DatasetManifest& manifest) { return gather_refs(manifest); }

    /// Per-patch ground-truth masks (N, h, w) as 0/1 bytes; records without
    /// a mask_ref get an all-zero grid of the given size.
    std::vector<std::uint8_t> gather_masks(const DatasetManifest& manifest, std::size_t grid_h, std::size_t grid_w) {
        std::vector<std::uint8_t> out;
        out.reserve(manifest.records.size() * grid_h * grid_w);
        for (const auto& r : manifest.records) {
            if (!r.mask_ref) {
                out.insert(out.end(), grid_h * grid_w, 0);
                continue;
            }
            const auto ref = parse_ref(*r.mask_ref);
            const auto& t = file(ref.file);
            if (t.grid_h() != grid_h || t.grid_w() != grid_w || t.channels() != 1 || ref.index >= t.samples()) {
                throw Error(ErrorKind::DimensionMismatch, "mask '" + *r.mask_ref + "' does not match the feature grid");
            }
            for (float v : t.sample(ref.index)) {
                out.push_back(v > 0.5f ? 1 : 0);
            }
        }
        return out;
    }

private:
    FeatureTensor gather_refs(const DatasetManifest& manifest) {
        if (manifest.records.empty()) {
            throw Error(ErrorKind::EmptyInput, "manifest '" + manifest.name + "' has no records");
        }
        std::vector<float> data;
        TensorShape shape;
        for (const auto& r : manifest.records) {
            const auto ref = parse_ref(r.feature_ref);
            const auto& t = file(ref.file);
            if (ref.index >= t.samples()) {
                throw Error(ErrorKind::InvalidArgument, "ref '" + r.feature_ref + "' index out of range");
            }
            if (shape.samples == 0) {
                shape = t.shape();
                shape.samples = 0;
                data.reserve(manifest.records.size() * shape.positions() * shape.channels);
            } else if (t.grid_h() != shape.grid_h || t.grid_w() != shape.grid_w || t.channels() != shape.channels) {
                throw Error(ErrorKind::DimensionMismatch, "ref '" + r.feature_ref + "' has shape " +
                                                              to_string(t.shape()) + " inconsistent with the manifest");
            }
            auto row = t.sample(ref.index);
            data.insert(data.end(), row.begin(), row.end());
            ++shape.samples;
        }
        return FeatureTensor(shape, std::move(data));
    }

    std::filesystem::path base_;
    std::map<std::string, FeatureTensor> cache_;
};

}

#endif
