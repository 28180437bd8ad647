// softpatch: command-line front end for the patch-denoising anomaly pipeline.
//
// Exit codes: 0 ok, 1 I/O, 2 configuration, 3 data.

#include <softpatch/softpatch.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace softpatch;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_io = 1;
constexpr int exit_config = 2;
constexpr int exit_data = 3;

/// Failure while reading or validating configuration, as opposed to data.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

int exit_code_for(const Error& e) {
    switch (e.kind()) {
    case ErrorKind::Io: return exit_io;
    case ErrorKind::SchemaViolation:
    case ErrorKind::InvalidArgument: return exit_config;
    default: return exit_data;
    }
}

template<typename F>
auto load_config(F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::Io) {
            throw;
        }
        throw ConfigError(e.what());
    }
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw Error(ErrorKind::Io, "cannot create output directory " + dir.string() + ": " + ec.message());
    }
}

/// Rewrites refs so they resolve from `to_dir` instead of `from_dir`.
DatasetManifest rebase_refs(DatasetManifest m, const fs::path& from_dir, const fs::path& to_dir) {
    auto fix = [&](std::string& ref) {
        auto parsed = parse_ref(ref);
        fs::path p(parsed.file);
        if (p.is_relative()) {
            const auto absolute = fs::weakly_canonical(fs::absolute(from_dir / p));
            p = fs::relative(absolute, fs::weakly_canonical(fs::absolute(to_dir)));
            ref = make_ref(p.generic_string(), parsed.index);
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

FeatureTensor load_manifest_features(const fs::path& manifest_path, DatasetManifest* manifest_out = nullptr) {
    auto manifest = load_manifest(manifest_path);
    FeatureResolver resolver(manifest_path.parent_path());
    auto features = resolver.gather(manifest);
    if (manifest_out != nullptr) {
        *manifest_out = std::move(manifest);
    }
    return features;
}

struct SynthOptions {
    fs::path spec;
    fs::path out;
};

int cmd_synth(const SynthOptions& o) {
    const auto spec = load_config([&] { return synthetic_spec_from_json(schema::parse_file(o.spec)); });
    auto data = generate_synthetic_dataset(spec);
    ensure_dir(o.out);
    write_feature_file(data.train, o.out / synthetic_train_file);
    write_feature_file(data.test, o.out / synthetic_test_file);
    write_feature_file(data.test_masks, o.out / synthetic_mask_file);
    save_manifest(data.train_manifest, o.out / "train.json");
    save_manifest(data.test_manifest, o.out / "test.json");
    std::cout << "wrote " << spec.n_normal << " train and " << data.test.samples() << " test samples to "
              << o.out.string() << '\n';
    return exit_ok;
}

struct InjectOptions {
    fs::path train;
    fs::path test;
    double ratio = 0.1;
    std::string mode = "overlap";
    std::uint64_t seed = 0;
    fs::path out;
};

int cmd_inject(const InjectOptions& o) {
    const NoiseInjectionSpec spec = load_config([&] {
        if (o.mode != "overlap" && o.mode != "no_overlap") {
            throw SchemaError("/mode", "expected 'overlap' or 'no_overlap'");
        }
        return NoiseInjectionSpec{o.ratio, o.mode == "overlap" ? OverlapMode::overlap : OverlapMode::no_overlap,
                                  o.seed, o.mode == "overlap"};
    });
    auto train = load_manifest(o.train);
    auto test = load_manifest(o.test);
    ensure_dir(o.out);
    train = rebase_refs(std::move(train), o.train.parent_path(), o.out);
    test = rebase_refs(std::move(test), o.test.parent_path(), o.out);
    auto [noisy_train, noisy_test] = build_noisy_split(train, test, spec);
    save_manifest(noisy_train, o.out / "train_noisy.json");
    save_manifest(noisy_test, o.out / "test_noisy.json");
    std::cout << "injected " << noisy_train.count(Origin::injected_noise) << " anomalous samples ("
              << noisy_train.noise_ratio << " of train)\n";
    return exit_ok;
}

MethodConfig load_run_config(const fs::path& path) {
    return load_config([&] {
        const auto j = schema::parse_file(path);
        schema::require_object(j, "");
        schema::only_keys(j, "", {"schema_version", "method"});
        schema::check_version(j);
        return method_from_json(schema::field(j, "", "method"), "/method");
    });
}

struct FitOptions {
    fs::path config;
    fs::path train;
    fs::path out;
};

int cmd_fit(const FitOptions& o) {
    const auto method = load_run_config(o.config);
    const auto train = load_manifest_features(o.train);
    std::vector<DiscriminatorTiming> timing;
    const auto model = fit_method(method, train, &timing);
    ensure_dir(o.out);
    auto report = [](const char* label, const MemoryBank& bank) {
        std::cout << label << ": removed " << bank.config["patches_removed"].get<std::size_t>() << " of "
                  << bank.config["patches_total"].get<std::size_t>() << " patches, " << bank.size()
                  << " bank entries\n";
    };
    if (model.segmentation) {
        save_memory_bank(model.classification, o.out / "bank_cls.spmb");
        save_memory_bank(*model.segmentation, o.out / "bank_seg.spmb");
        report("bank_cls.spmb", model.classification);
        report("bank_seg.spmb", *model.segmentation);
    } else {
        save_memory_bank(model.classification, o.out / "bank.spmb");
        report("bank.spmb", model.classification);
    }
    for (const auto& t : timing) {
        std::cout << "discriminator " << to_string(t.which) << ": " << t.milliseconds << " ms\n";
    }
    return exit_ok;
}

struct ScoreOptions {
    fs::path bank;
    fs::path seg_bank;
    fs::path test;
    fs::path out;
    std::vector<std::size_t> map_size;
    double sigma = default_smoothing_sigma;
};

int cmd_score(const ScoreOptions& o) {
    if (!o.map_size.empty() && o.map_size.size() != 2) {
        throw ConfigError("--map-size expects two values: height width");
    }
    const auto bank = load_memory_bank(o.bank);
    std::optional<MemoryBank> seg;
    if (!o.seg_bank.empty()) {
        seg = load_memory_bank(o.seg_bank);
    }

    FeatureTensor test;
    std::vector<std::string> ids;
    if (o.test.extension() == ".json") {
        DatasetManifest manifest;
        test = load_manifest_features(o.test, &manifest);
        for (const auto& r : manifest.records) {
            ids.push_back(r.id);
        }
    } else {
        test = read_feature_file(o.test);
        for (std::size_t i = 0; i < test.samples(); ++i) {
            ids.push_back("sample_" + std::to_string(i));
        }
    }

    const auto report = score_report(bank, seg ? &*seg : nullptr, test, std::move(ids));
    ensure_dir(o.out);
    schema::write_file(to_json(report), o.out / "report.json");
    write_feature_file(per_patch_tensor(report.per_patch), o.out / "patch_scores.spf");
    if (!o.map_size.empty()) {
        const std::size_t h = o.map_size[0];
        const std::size_t w = o.map_size[1];
        std::vector<float> maps;
        maps.reserve(test.samples() * h * w);
        for (std::size_t i = 0; i < test.samples(); ++i) {
            const auto m = anomaly_map(report.per_patch.grid(i), test.grid_h(), test.grid_w(), h, w, o.sigma);
            maps.insert(maps.end(), m.begin(), m.end());
        }
        write_feature_file(FeatureTensor({test.samples(), h, w, 1}, std::move(maps)), o.out / "anomaly_maps.spf");
    }
    std::cout << "scored " << test.samples() << " samples\n";
    return exit_ok;
}

struct SweepOptions {
    fs::path config;
    fs::path out;
    bool no_runtime = false;
};

int run_sweep(const SweepOptions& o, bool single_cell) {
    const auto cfg = load_config([&] {
        auto c = sweep_config_from_json(schema::parse_file(o.config), o.config.parent_path());
        if (single_cell && c.cells() != 1) {
            throw SchemaError("/noise", "eval runs exactly one cell; use sweep for grids");
        }
        return c;
    });
    const auto rows = sweep(cfg, [](const MetricsRow& r) {
        std::cerr << r.method << " ratio=" << format_ratio(r.ratio) << " seed=" << r.seed << ": "
                  << (r.error ? "error " + *r.error : "image_auroc=" + format_number(r.image_auroc, 4)) << '\n';
    });
    std::ostringstream csv;
    write_csv(csv, rows, !o.no_runtime);
    if (o.out.empty()) {
        std::cout << csv.str();
    } else {
        if (o.out.has_parent_path()) {
            ensure_dir(o.out.parent_path());
        }
        const auto text = csv.str();
        binary::write_bytes(o.out, std::span<const char>(text.data(), text.size()));
    }
    return exit_ok;
}

}

int main(int argc, char** argv) {
    CLI::App app{"Patch-level denoising and soft-weighted coreset anomaly detection"};
    app.require_subcommand(1);
    unsigned threads = 0;
    app.add_option("--threads", threads, "Worker thread cap (default: SOFTPATCH_THREADS or all cores)");

    SynthOptions synth;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic patch-feature dataset");
    synth_cmd->add_option("--spec", synth.spec, "Synthetic spec JSON")->required();
    synth_cmd->add_option("--out", synth.out, "Output directory")->required();

    InjectOptions inject;
    auto* inject_cmd = app.add_subcommand("inject-noise", "Move anomalous test samples into the training set");
    inject_cmd->add_option("--train", inject.train, "Clean train manifest")->required();
    inject_cmd->add_option("--test", inject.test, "Test manifest")->required();
    inject_cmd->add_option("--ratio", inject.ratio, "Noise ratio of the final training set")->required();
    inject_cmd->add_option("--mode", inject.mode, "overlap or no_overlap")->capture_default_str();
    inject_cmd->add_option("--seed", inject.seed, "Selection seed")->capture_default_str();
    inject_cmd->add_option("--out", inject.out, "Output directory")->required();

    FitOptions fit;
    auto* fit_cmd = app.add_subcommand("fit", "Build memory bank(s) from training features");
    fit_cmd->add_option("--config", fit.config, "Run config JSON")->required();
    fit_cmd->add_option("--train", fit.train, "Train manifest")->required();
    fit_cmd->add_option("--out", fit.out, "Output directory for bank files")->required();

    ScoreOptions score;
    auto* score_cmd = app.add_subcommand("score", "Score test features against memory bank(s)");
    score_cmd->add_option("--bank", score.bank, "Bank for image scores (bank.spmb or bank_cls.spmb)")->required();
    score_cmd->add_option("--seg-bank", score.seg_bank, "Bank for patch grids (bank_seg.spmb)");
    score_cmd->add_option("--test", score.test, "Test manifest (.json) or SPF1 features")->required();
    score_cmd->add_option("--out", score.out, "Output directory")->required();
    score_cmd->add_option("--map-size", score.map_size, "Also write upsampled anomaly maps: HEIGHT WIDTH")
        ->expected(2);
    score_cmd->add_option("--sigma", score.sigma, "Anomaly-map smoothing sigma in pixels")->capture_default_str();

    SweepOptions eval;
    auto* eval_cmd = app.add_subcommand("eval", "Run one evaluation cell and emit CSV");
    eval_cmd->add_option("--config", eval.config, "Evaluation config JSON")->required();
    eval_cmd->add_option("--out", eval.out, "CSV output path (default stdout)");
    eval_cmd->add_flag("--no-runtime", eval.no_runtime, "Write 0 in runtime_ms for byte-stable output");

    SweepOptions sweep_opts;
    auto* sweep_cmd = app.add_subcommand("sweep", "Run a methods x ratios x seeds grid and emit CSV");
    sweep_cmd->add_option("--config", sweep_opts.config, "Sweep config JSON")->required();
    sweep_cmd->add_option("--out", sweep_opts.out, "CSV output path (default stdout)");
    sweep_cmd->add_flag("--no-runtime", sweep_opts.no_runtime, "Write 0 in runtime_ms for byte-stable output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config;
    }
    if (threads > 0) {
        set_max_threads(threads);
    }

    try {
        if (*synth_cmd) return cmd_synth(synth);
        if (*inject_cmd) return cmd_inject(inject);
        if (*fit_cmd) return cmd_fit(fit);
        if (*score_cmd) return cmd_score(score);
        if (*eval_cmd) return run_sweep(eval, true);
        if (*sweep_cmd) return run_sweep(sweep_opts, false);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e) == exit_config ? exit_data : exit_code_for(e);
    } catch (const fs::filesystem_error& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return exit_io;
    }
    return exit_config;
}
