#include "test_util.hpp"

#include <sys/wait.h>

#include <fstream>
#include <sstream>

using namespace softpatch;

namespace {

struct Run {
    int code;
    std::string output;
};

Run run(const std::string& args, const testutil::TempDir& dir) {
    const auto log = dir / "cli.log";
    const std::string cmd = std::string(SOFTPATCH_CLI) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream(p) << text;
}

std::string spec_json(std::size_t n_normal, bool with_seed = true) {
    auto j = to_json(SyntheticSpec{});
    j["n_normal"] = n_normal;
    if (!with_seed) j.erase("seed");
    return j.dump();
}

std::vector<char> bytes_of(const std::filesystem::path& p) { return binary::slurp(p); }

}

TEST(Cli, HelpListsSubcommands) {
    testutil::TempDir dir;
    const auto r = run("--help", dir);
    EXPECT_EQ(r.code, 0);
    for (const char* s : {"synth", "inject-noise", "fit", "score", "eval", "sweep", "--threads"})
        EXPECT_NE(r.output.find(s), std::string::npos) << s;
}

TEST(Cli, SynthWritesFiles) {
    testutil::TempDir dir;
    write_text(dir / "spec.json", spec_json(20));
    const auto r = run("synth --spec " + (dir / "spec.json").string() + " --out " + (dir / "data").string(), dir);
    ASSERT_EQ(r.code, 0) << r.output;
    for (const char* f : {"train.spf", "test.spf", "test_masks.spf", "train.json", "test.json"})
        EXPECT_TRUE(std::filesystem::exists(dir / "data" / f)) << f;
}

TEST(Cli, SynthMissingSeedIsConfigError) {
    testutil::TempDir dir;
    write_text(dir / "spec.json", spec_json(20, false));
    const auto r = run("synth --spec " + (dir / "spec.json").string() + " --out " + (dir / "data").string(), dir);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find("seed"), std::string::npos);
}

TEST(Cli, SynthUnwritableDirIsIo) {
    testutil::TempDir dir;
    write_text(dir / "spec.json", spec_json(20));
    write_text(dir / "blocker", "x");
    const auto r = run("synth --spec " + (dir / "spec.json").string() + " --out " + (dir / "blocker" / "sub").string(), dir);
    EXPECT_EQ(r.code, 1);
}

TEST(Cli, FullPipeline) {
    testutil::TempDir dir;
    const auto d = dir.path().string();
    write_text(dir / "spec.json", spec_json(40));
    write_text(dir / "run.json", R"({"schema_version": 1, "method": "softpatch+"})");
    ASSERT_EQ(run("synth --spec " + d + "/spec.json --out " + d + "/data", dir).code, 0);
    auto r = run("inject-noise --train " + d + "/data/train.json --test " + d + "/data/test.json --ratio 0.1 --seed 1 --out " +
                     d + "/noisy",
                 dir);
    ASSERT_EQ(r.code, 0) << r.output;
    const auto noisy = load_manifest(dir / "noisy" / "train_noisy.json");
    EXPECT_EQ(noisy.count(Origin::injected_noise), 4u);

    r = run("--threads 2 fit --config " + d + "/run.json --train " + d + "/noisy/train_noisy.json --out " + d + "/bank", dir);
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_NE(r.output.find("removed"), std::string::npos);
    EXPECT_NE(r.output.find("discriminator lof"), std::string::npos);
    EXPECT_NO_THROW(load_memory_bank(dir / "bank" / "bank_cls.spmb"));
    EXPECT_NO_THROW(load_memory_bank(dir / "bank" / "bank_seg.spmb"));

    r = run("score --bank " + d + "/bank/bank_cls.spmb --seg-bank " + d + "/bank/bank_seg.spmb --test " + d +
                "/noisy/test_noisy.json --out " + d + "/scores --map-size 8 8",
            dir);
    ASSERT_EQ(r.code, 0) << r.output;
    const auto report = schema::parse_file(dir / "scores" / "report.json");
    EXPECT_EQ(report["image_bank"]["task"], "classification");
    EXPECT_EQ(report["map_bank"]["task"], "segmentation");
    EXPECT_EQ(report["per_image"].size(), 40u);
    EXPECT_EQ(read_feature_file(dir / "scores" / "patch_scores.spf").shape(), (TensorShape{40, 4, 4, 1}));
    EXPECT_EQ(read_feature_file(dir / "scores" / "anomaly_maps.spf").shape(), (TensorShape{40, 8, 8, 1}));
}

TEST(Cli, FitIsByteDeterministic) {
    testutil::TempDir dir;
    const auto d = dir.path().string();
    write_text(dir / "spec.json", spec_json(30));
    write_text(dir / "run.json", R"({"schema_version": 1, "method": {"preset": "softpatch-lof", "projection_dim": 4}})");
    ASSERT_EQ(run("synth --spec " + d + "/spec.json --out " + d + "/data", dir).code, 0);
    ASSERT_EQ(run("fit --config " + d + "/run.json --train " + d + "/data/train.json --out " + d + "/a", dir).code, 0);
    ASSERT_EQ(run("fit --config " + d + "/run.json --train " + d + "/data/train.json --out " + d + "/b", dir).code, 0);
    EXPECT_EQ(bytes_of(dir / "a" / "bank.spmb"), bytes_of(dir / "b" / "bank.spmb"));
}

TEST(Cli, FitTooFewSamplesIsDataError) {
    testutil::TempDir dir;
    const auto d = dir.path().string();
    write_text(dir / "spec.json", spec_json(6));
    write_text(dir / "run.json", R"({"schema_version": 1, "method": "softpatch-lof"})");
    ASSERT_EQ(run("synth --spec " + d + "/spec.json --out " + d + "/data", dir).code, 0);
    const auto r = run("fit --config " + d + "/run.json --train " + d + "/data/train.json --out " + d + "/bank", dir);
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.output.find("InsufficientSamples"), std::string::npos);
}

TEST(Cli, ScoreErrors) {
    testutil::TempDir dir;
    const auto d = dir.path().string();
    write_text(dir / "spec.json", spec_json(20));
    write_text(dir / "run.json", R"({"schema_version": 1, "method": "patchcore"})");
    ASSERT_EQ(run("synth --spec " + d + "/spec.json --out " + d + "/data", dir).code, 0);
    EXPECT_EQ(run("score --bank " + d + "/missing.spmb --test " + d + "/data/test.json --out " + d + "/s", dir).code, 1);

    ASSERT_EQ(run("fit --config " + d + "/run.json --train " + d + "/data/train.json --out " + d + "/bank", dir).code, 0);
    write_feature_file(FeatureTensor({1, 4, 4, 3}, std::vector<float>(48, 0.0f)), dir / "wrong.spf");
    EXPECT_EQ(run("score --bank " + d + "/bank/bank.spmb --test " + d + "/wrong.spf --out " + d + "/s", dir).code, 3);
}

TEST(Cli, EvalAndSweep) {
    testutil::TempDir dir;
    const auto d = dir.path().string();
    auto synth = to_json(SyntheticSpec{});
    synth.erase("seed");
    synth["n_normal"] = 30;
    schema::json cfg = {{"schema_version", 1},
                        {"data", {{"synthetic", synth}}},
                        {"method", "softpatch-lof"},
                        {"noise", {{"mode", "overlap"}, {"ratio", 0.0}, {"seed", 0}}}};
    write_text(dir / "eval.json", cfg.dump());
    auto r = run("eval --config " + d + "/eval.json --out " + d + "/eval.csv", dir);
    ASSERT_EQ(r.code, 0) << r.output;
    std::ifstream in(dir / "eval.csv");
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) ++lines;
    EXPECT_EQ(lines, 2u);

    cfg["noise"] = {{"mode", "no_overlap"}, {"ratios", {0.0, 0.5}}, {"seeds", {0, 1}}};
    write_text(dir / "sweep.json", cfg.dump());
    EXPECT_EQ(run("eval --config " + d + "/sweep.json", dir).code, 2);
    r = run("sweep --config " + d + "/sweep.json --no-runtime --out " + d + "/a.csv", dir);
    ASSERT_EQ(r.code, 0) << r.output;
    ASSERT_EQ(run("sweep --config " + d + "/sweep.json --no-runtime --out " + d + "/b.csv", dir).code, 0);
    EXPECT_EQ(bytes_of(dir / "a.csv"), bytes_of(dir / "b.csv"));
    const auto csv = bytes_of(dir / "a.csv");
    EXPECT_NE(std::string(csv.begin(), csv.end()).find("error:InfeasibleRatio"), std::string::npos);
}
