#ifndef SOFTPATCH_METHOD_HPP
#define SOFTPATCH_METHOD_HPP

#include "coreset.hpp"

#include <optional>
#include <string>
#include <vector>

namespace softpatch {

/**
 * A complete fitting recipe. With tau_seg set, two banks are built from the
 * same score map: `coreset.tau` drives the image-score bank and tau_seg the
 * anomaly-map bank.
 */
struct MethodConfig {
    std::string name = "softpatch+";
    DiscriminatorConfig discriminator;
    CoresetConfig coreset;
    std::optional<double> tau_seg = 0.50;

    void validate() const {
        discriminator.validate();
        coreset.validate();
        if (tau_seg && !(*tau_seg >= 0.0 && *tau_seg < 1.0)) {
            throw Error(ErrorKind::InvalidArgument, "tau_seg must lie in [0, 1)");
        }
    }
};

inline const std::vector<std::string>& method_presets() {
    static const std::vector<std::string> names = {"patchcore", "softpatch-nearest", "softpatch-gaussian",
                                                   "softpatch-lof", "softpatch+"};
    return names;
}

/// "patchcore" is the no-denoise baseline: no discriminator, tau 0, unit weights.
inline MethodConfig method_preset(const std::string& name) {
    MethodConfig m;
    m.name = name;
    m.tau_seg.reset();
    if (name == "patchcore") {
        m.discriminator.selectors = {false, false, false};
        m.coreset.tau = 0.0;
    } else if (name == "softpatch-nearest") {
        m.discriminator.selectors = {true, false, false};
    } else if (name == "softpatch-gaussian") {
        m.discriminator.selectors = {false, true, false};
    } else if (name == "softpatch-lof") {
        m.discriminator.selectors = {false, false, true};
    } else if (name == "softpatch+") {
        m.discriminator.selectors = {false, true, true};
        m.tau_seg = 0.50;
    } else {
        throw Error(ErrorKind::InvalidArgument, "unknown method preset '" + name + "'");
    }
    return m;
}

inline schema::json to_json(const MethodConfig& m) {
    return schema::json{{"name", m.name},
                        {"discriminator", to_json(m.discriminator)},
                        {"coreset", to_json(m.coreset)},
                        {"tau_seg", m.tau_seg ? schema::json(*m.tau_seg) : schema::json()}};
}

/**
 * Accepts a preset name, or an object
 *   {"preset", "name", "lof_k", "epsilon", "selectors": [nn, mvg, lof],
 *    "tau", "tau_seg", "sampling_ratio", "projection_dim", "seed"}
 * where every key is optional and overrides the preset (default softpatch+).
 */
inline MethodConfig method_from_json(const schema::json& j, const std::string& ptr) {
    auto preset = [&](const std::string& name, const std::string& p) {
        try {
            return method_preset(name);
        } catch (const Error& e) {
            throw SchemaError(p, e.what());
        }
    };
    if (j.is_string()) {
        return preset(j.get<std::string>(), ptr);
    }
    schema::require_object(j, ptr);
    schema::only_keys(j, ptr,
                      {"preset", "name", "lof_k", "epsilon", "selectors", "tau", "tau_seg", "sampling_ratio",
                       "projection_dim", "seed"});
    const auto base = schema::optional<std::string>(j, ptr, "preset", schema::get_string).value_or("softpatch+");
    MethodConfig m = preset(base, schema::child(ptr, "preset"));
    m.name = schema::optional<std::string>(j, ptr, "name", schema::get_string).value_or(base);
    if (auto v = schema::optional<std::uint64_t>(j, ptr, "lof_k", schema::get_unsigned)) m.discriminator.lof_k = *v;
    if (auto v = schema::optional<double>(j, ptr, "epsilon", schema::get_number)) m.discriminator.epsilon = *v;
    if (j.contains("selectors")) {
        const auto& s = j["selectors"];
        const auto sp = schema::child(ptr, "selectors");
        if (!s.is_array() || s.size() != 3) {
            throw SchemaError(sp, "expected [nn, mvg, lof] with values 0 or 1");
        }
        bool flags[3];
        for (std::size_t i = 0; i < 3; ++i) {
            if (!s[i].is_number_integer() || (s[i].get<int>() != 0 && s[i].get<int>() != 1)) {
                throw SchemaError(schema::child(sp, i), "selector must be 0 or 1");
            }
            flags[i] = s[i].get<int>() == 1;
        }
        m.discriminator.selectors = {flags[0], flags[1], flags[2]};
    }
    if (auto v = schema::optional<double>(j, ptr, "tau", schema::get_number)) m.coreset.tau = *v;
    if (j.contains("tau_seg")) {
        m.tau_seg = schema::optional<double>(j, ptr, "tau_seg", schema::get_number);
    }
    if (auto v = schema::optional<double>(j, ptr, "sampling_ratio", schema::get_number)) m.coreset.sampling_ratio = *v;
    if (j.contains("projection_dim")) {
        m.coreset.projection_dim = schema::optional<std::uint64_t>(j, ptr, "projection_dim", schema::get_unsigned);
    }
    if (auto v = schema::optional<std::uint64_t>(j, ptr, "seed", schema::get_unsigned)) m.coreset.seed = *v;
    try {
        m.validate();
    } catch (const Error& e) {
        throw SchemaError(ptr, e.what());
    }
    return m;
}

/// Banks produced by fitting a method; `segmentation` is set only with tau_seg.
struct FittedModel {
    MemoryBank classification;
    std::optional<MemoryBank> segmentation;

    const MemoryBank& image_bank() const { return classification; }
    const MemoryBank& map_bank() const { return segmentation ? *segmentation : classification; }
};

inline FittedModel fit_method(const MethodConfig& method, const FeatureTensor& train,
                              std::vector<DiscriminatorTiming>* timing = nullptr) {
    method.validate();
    if (method.tau_seg) {
        auto banks = build_dual_banks(train, method.coreset, *method.tau_seg, method.discriminator, timing);
        return {std::move(banks.classification), std::move(banks.segmentation)};
    }
    return {build_memory_bank(train, method.coreset, method.discriminator, timing), std::nullopt};
}

}

#endif
