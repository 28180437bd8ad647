#include "oracles.hpp"
#include "test_util.hpp"

using namespace softpatch;

namespace {

MemoryBank bank_1d(std::vector<float> entries, std::vector<double> weights) {
    MemoryBank b;
    b.entries = PatchMatrix{std::move(entries), 1};
    b.soft_weights = std::move(weights);
    b.provenance.assign(b.soft_weights.size(), PatchRef{});
    return b;
}

}

TEST(Query, ExactHitAndMidpointSide) {
    const auto b = bank_1d({0, 10}, {1, 1});
    const float q0[] = {10.0f};
    EXPECT_EQ(query_nearest(b, q0).index, 1u);
    EXPECT_EQ(query_nearest(b, q0).distance, 0.0);
    const float q1[] = {4.0f};
    EXPECT_EQ(query_nearest(b, q1).index, 0u);
    EXPECT_EQ(query_nearest(b, q1).distance, 4.0);
}

TEST(Query, MatchesLinearScan) {
    std::mt19937_64 gen(21);
    std::normal_distribution<float> nd;
    MemoryBank b;
    b.entries = PatchMatrix{std::vector<float>(500 * 6), 6};
    for (auto& v : b.entries.data) v = nd(gen);
    b.soft_weights.assign(500, 1.0);
    b.provenance.assign(500, PatchRef{});
    for (int q = 0; q < 100; ++q) {
        std::vector<float> x(6);
        for (auto& v : x) v = nd(gen);
        std::size_t best = 0;
        double best_d = 1e300;
        for (std::size_t i = 0; i < 500; ++i) {
            double d = 0.0;
            for (std::size_t c = 0; c < 6; ++c) {
                const double diff = double(x[c]) - double(b.entries.data[i * 6 + c]);
                d += diff * diff;
            }
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        const auto m = query_nearest(b, x);
        EXPECT_EQ(m.index, best);
        EXPECT_EQ(m.distance, std::sqrt(best_d));
    }
}

TEST(Query, DimensionMismatch) {
    const auto b = bank_1d({0}, {1});
    const float q[] = {1.0f, 2.0f};
    EXPECT_ERROR_KIND(query_nearest(b, q), ErrorKind::DimensionMismatch);
}

TEST(PatchScore, ZeroDistanceIgnoresWeight) {
    const auto b = bank_1d({2}, {5.0});
    const auto s = score_patches(b, FeatureTensor({1, 1, 1, 1}, {2.0f}));
    EXPECT_EQ(s.scores[0], 0.0);
}

TEST(PatchScore, UnitWeightSingleton) {
    const auto b = bank_1d({0}, {1.0});
    EXPECT_EQ(score_patches(b, FeatureTensor({1, 1, 1, 1}, {3.0f})).scores[0], 3.0);
}

TEST(PatchScore, TieGoesToLowerIndex) {
    const auto b = bank_1d({-2, 2}, {0.5, 1.5});
    const auto s = score_patches(b, FeatureTensor({1, 1, 1, 1}, {0.0f}));
    EXPECT_EQ(s.matches[0], 0u);
    EXPECT_EQ(s.scores[0], 1.0);
}

TEST(ImageScore, MaxOverGrid) {
    EXPECT_EQ(image_score(std::vector<double>(9, 0.0)), 0.0);
    std::vector<double> g(9, 0.0);
    g[4] = 5.0;
    EXPECT_EQ(image_score(g), 5.0);
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(-5, 5);
    std::vector<double> r(50);
    for (auto& v : r) v = u(gen);
    auto sorted = r;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(image_score(r), sorted.back());
    EXPECT_ERROR_KIND(image_score(std::vector<double>{}), ErrorKind::EmptyInput);
}

TEST(AnomalyMap, IdentityAtGridSize) {
    const std::vector<double> g = {1, 2, 3, 4, 5, 6};
    EXPECT_EQ(anomaly_map(g, 2, 3, 2, 3, 0.0), g);
}

TEST(AnomalyMap, ConstantStaysConstant) {
    const std::vector<double> g(4, 2.5);
    for (double v : anomaly_map(g, 2, 2, 17, 9, 4.0)) EXPECT_NEAR(v, 2.5, 1e-12);
}

TEST(AnomalyMap, BilinearCornerAligned) {
    const std::vector<double> g = {0, 0, 0, 1};
    const auto m = anomaly_map(g, 2, 2, 4, 4, 0.0);
    EXPECT_EQ(m[15], 1.0);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(m[i * 4 + j], (i / 3.0) * (j / 3.0), 1e-12);
}

TEST(AnomalyMap, BlurPreservesMassAndSymmetry) {
    std::vector<double> g(25, 0.0);
    g[12] = 1.0;
    const auto m = anomaly_map(g, 5, 5, 21, 21, 1.5);
    double sum_before = 0.0;
    for (double v : anomaly_map(g, 5, 5, 21, 21, 0.0)) sum_before += v;
    double sum_after = 0.0;
    for (double v : m) sum_after += v;
    EXPECT_NEAR(sum_after, sum_before, 1e-9);
    EXPECT_NEAR(m[0], m[20 * 21 + 20], 1e-12);
    EXPECT_NEAR(m[3 * 21 + 7], m[7 * 21 + 3], 1e-12);
}

TEST(Report, SelfScoresAreZeroAndRoutesBanks) {
    SyntheticSpec spec;
    spec.n_normal = 12;
    const auto data = generate_synthetic_dataset(spec);
    CoresetConfig cfg;
    cfg.tau = 0.0;
    cfg.sampling_ratio = 1.0;
    const auto bank = build_memory_bank(data.train, cfg, {});
    std::vector<std::string> ids;
    for (const auto& r : data.train_manifest.records) ids.push_back(r.id);
    const auto self = score_report(bank, nullptr, data.train, ids);
    for (double s : self.image_scores) EXPECT_EQ(s, 0.0);

    const auto model = fit_method(method_preset("softpatch+"), data.train);
    const auto r = score_report(model.image_bank(), &model.map_bank(), data.train, ids);
    EXPECT_EQ(r.image_bank_config["task"], "classification");
    EXPECT_EQ(r.map_bank_config["task"], "segmentation");
    const auto j = to_json(r);
    EXPECT_EQ(j["per_image"].size(), ids.size());
    EXPECT_EQ(j["per_image"][0]["nearest"].size(), 16u);
    EXPECT_EQ(per_patch_tensor(r.per_patch).shape(), (TensorShape{12, 4, 4, 1}));
}
