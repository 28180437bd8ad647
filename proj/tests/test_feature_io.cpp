#include "oracles.hpp"
#include "test_util.hpp"

#include <cstring>
#include <limits>

using namespace softpatch;

TEST(FeatureIo, MinimalTensorIs40Bytes) {
    const FeatureTensor t({1, 1, 1, 1}, {0.0f});
    const auto bytes = encode_feature_tensor(t);
    ASSERT_EQ(bytes.size(), 40u);
    EXPECT_EQ(std::string(bytes.data(), 4), "SPF1");
    EXPECT_EQ(spf_header_bytes, 36u);
}

TEST(FeatureIo, HeaderIsLittleEndian) {
    const FeatureTensor t({2, 3, 4, 5}, std::vector<float>(120, 1.5f));
    const auto bytes = encode_feature_tensor(t);
    const unsigned char* u = reinterpret_cast<const unsigned char*>(bytes.data());
    EXPECT_EQ(u[4], 2);
    EXPECT_EQ(u[12], 3);
    EXPECT_EQ(u[20], 4);
    EXPECT_EQ(u[28], 5);
    for (int i = 5; i < 12; ++i) EXPECT_EQ(u[i], 0);
    float first;
    std::memcpy(&first, bytes.data() + 36, 4);
    EXPECT_EQ(first, 1.5f);
}

TEST(FeatureIo, RoundTripIsBitIdentical) {
    std::mt19937_64 gen(11);
    const auto t = oracle::random_tensor(gen, {2, 3, 3, 8});
    testutil::TempDir dir;
    write_feature_file(t, dir / "t.spf");
    const auto back = read_feature_file(dir / "t.spf");
    EXPECT_EQ(back.shape(), t.shape());
    ASSERT_EQ(back.data().size(), t.data().size());
    EXPECT_EQ(std::memcmp(back.data().data(), t.data().data(), t.data().size() * 4), 0);
}

TEST(FeatureIo, BadMagicIsMalformedHeader) {
    auto bytes = encode_feature_tensor(FeatureTensor({1, 1, 1, 1}, {0.0f}));
    bytes[3] = '0';
    EXPECT_ERROR_KIND(decode_feature_tensor(bytes), ErrorKind::MalformedHeader);
}

TEST(FeatureIo, ShortHeaderIsMalformed) {
    auto bytes = encode_feature_tensor(FeatureTensor({1, 1, 1, 1}, {0.0f}));
    bytes.resize(20);
    EXPECT_ERROR_KIND(decode_feature_tensor(bytes), ErrorKind::MalformedHeader);
}

TEST(FeatureIo, ZeroDimensionIsMalformed) {
    auto bytes = encode_feature_tensor(FeatureTensor({1, 1, 1, 1}, {0.0f}));
    std::memset(bytes.data() + 4, 0, 8);
    EXPECT_ERROR_KIND(decode_feature_tensor(bytes), ErrorKind::MalformedHeader);
}

TEST(FeatureIo, ShortPayloadIsTruncated) {
    auto bytes = encode_feature_tensor(FeatureTensor({2, 2, 2, 2}, std::vector<float>(16, 0.25f)));
    bytes.resize(bytes.size() - 4);
    EXPECT_ERROR_KIND(decode_feature_tensor(bytes), ErrorKind::TruncatedPayload);
}

TEST(FeatureIo, NaNReportsFlatIndex) {
    std::vector<float> data(16, 0.0f);
    auto bytes = encode_feature_tensor(FeatureTensor({2, 2, 2, 2}, data));
    const float nan = std::numeric_limits<float>::quiet_NaN();
    std::memcpy(bytes.data() + 36 + 4 * 13, &nan, 4);
    try {
        decode_feature_tensor(bytes);
        FAIL() << "expected NonFiniteError";
    } catch (const NonFiniteError& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NonFiniteValue);
        EXPECT_EQ(e.index(), 13u);
    }
}

TEST(FeatureIo, EncodingRejectsInfinity) {
    std::vector<float> data(4, 0.0f);
    data[2] = std::numeric_limits<float>::infinity();
    EXPECT_ERROR_KIND(encode_feature_tensor(FeatureTensor({1, 2, 2, 1}, data)), ErrorKind::NonFiniteValue);
}

TEST(FeatureIo, MissingFileIsIo) {
    EXPECT_ERROR_KIND(read_feature_file("/nonexistent/dir/x.spf"), ErrorKind::Io);
}

TEST(FeatureIo, TensorAccessorsUseSampleRowColChannelOrder) {
    std::vector<float> data(2 * 2 * 3 * 4);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = float(i);
    const FeatureTensor t({2, 2, 3, 4}, data);
    EXPECT_EQ(t.patch(1, 1, 2)[0], float(((1 * 2 + 1) * 3 + 2) * 4));
    EXPECT_EQ(t.patch_index(1, 0, 1), 7u);
    EXPECT_ERROR_KIND(FeatureTensor({2, 2, 3, 4}, std::vector<float>(5)), ErrorKind::DimensionMismatch);
}
