#include "test_util.hpp"

using namespace softpatch;

namespace {

DatasetManifest three_records() {
    DatasetManifest m;
    m.name = "toy";
    m.split = Split::test;
    m.records = {
        {"a", Label::normal, "f.spf#0", std::nullopt, Origin::test},
        {"b", Label::anomalous, "f.spf#1", "m.spf#0", Origin::test},
        {"c", Label::normal, "f.spf#2", std::nullopt, Origin::test},
    };
    return m;
}

}

TEST(Manifest, EmptyRecordsAreValidWithZeroRatio) {
    DatasetManifest m;
    m.name = "empty";
    EXPECT_NO_THROW(validate(m));
    m.noise_ratio = 0.1;
    EXPECT_ERROR_KIND(validate(m), ErrorKind::SchemaViolation);
}

TEST(Manifest, DuplicateIdRejected) {
    auto m = three_records();
    m.records[2].id = "a";
    EXPECT_ERROR_KIND(validate(m), ErrorKind::DuplicateId);
}

TEST(Manifest, RoundTripThroughFile) {
    const auto m = three_records();
    testutil::TempDir dir;
    save_manifest(m, dir / "m.json");
    EXPECT_EQ(load_manifest(dir / "m.json"), m);
}

TEST(Manifest, UnknownKeyReportsPointer) {
    auto j = to_json(three_records());
    j["records"][1]["colour"] = "red";
    try {
        manifest_from_json(j);
        FAIL() << "expected SchemaError";
    } catch (const SchemaError& e) {
        EXPECT_EQ(e.pointer(), "/records/1/colour");
    }
}

TEST(Manifest, WrongVersionRejected) {
    auto j = to_json(three_records());
    j["schema_version"] = 2;
    try {
        manifest_from_json(j);
        FAIL() << "expected SchemaError";
    } catch (const SchemaError& e) {
        EXPECT_EQ(e.pointer(), "/schema_version");
    }
}

TEST(Manifest, MaskOnNormalRecordRejected) {
    auto m = three_records();
    m.records[0].mask_ref = "m.spf#1";
    EXPECT_ERROR_KIND(validate(m), ErrorKind::SchemaViolation);
}

TEST(Manifest, RefParsing) {
    const auto r = parse_ref("dir/x.spf#12");
    EXPECT_EQ(r.file, "dir/x.spf");
    EXPECT_EQ(r.index, 12u);
    EXPECT_ERROR_KIND(parse_ref("x.spf"), ErrorKind::InvalidArgument);
    EXPECT_ERROR_KIND(parse_ref("x.spf#-1"), ErrorKind::InvalidArgument);
}

TEST(Manifest, ResolverGathersInRecordOrder) {
    std::vector<float> data = {0, 1, 2, 3, 4, 5};
    FeatureResolver r;
    r.add("f.spf", FeatureTensor({3, 1, 1, 2}, data));
    DatasetManifest m;
    m.records = {{"x", Label::normal, "f.spf#2", std::nullopt, Origin::test},
                 {"y", Label::normal, "f.spf#0", std::nullopt, Origin::test}};
    const auto t = r.gather(m);
    ASSERT_EQ(t.samples(), 2u);
    EXPECT_EQ(t.patch(0, 0, 0)[0], 4.0f);
    EXPECT_EQ(t.patch(1, 0, 0)[1], 1.0f);
    m.records[0].feature_ref = "f.spf#3";
    EXPECT_ERROR_KIND(r.gather(m), ErrorKind::InvalidArgument);
}
