#ifndef SOFTPATCH_FEATURE_IO_HPP
#define SOFTPATCH_FEATURE_IO_HPP

#include "binary_io.hpp"
#include "tensor.hpp"

#include <filesystem>

namespace softpatch {

/**
 * SPF1 feature file:
 *
 *   offset 0   "SPF1"
 *   offset 4   u64 N, u64 h, u64 w, u64 c      (little-endian)
 *   offset 36  N*h*w*c float32, little-endian, (N, h, w, c) order
 */
inline constexpr std::string_view spf_magic = "SPF1";
inline constexpr std::size_t spf_header_bytes = 36;

inline std::vector<char> encode_feature_tensor(const FeatureTensor& tensor) {
    tensor.check_finite("write_feature_file");
    binary::Writer out;
    out.bytes(spf_magic);
    out.u64(tensor.samples());
    out.u64(tensor.grid_h());
    out.u64(tensor.grid_w());
    out.u64(tensor.channels());
    out.f32s(tensor.data());
    return out.buffer();
}

inline FeatureTensor decode_feature_tensor(std::span<const char> bytes, const std::string& where = "SPF1") {
    binary::Reader in(bytes);
    if (in.bytes(4, ErrorKind::MalformedHeader, where + " magic") != spf_magic) {
        throw Error(ErrorKind::MalformedHeader, where + ": bad magic, expected SPF1");
    }
    TensorShape shape;
    shape.samples = in.u64(ErrorKind::MalformedHeader, where + " header");
    shape.grid_h = in.u64(ErrorKind::MalformedHeader, where + " header");
    shape.grid_w = in.u64(ErrorKind::MalformedHeader, where + " header");
    shape.channels = in.u64(ErrorKind::MalformedHeader, where + " header");
    if (shape.samples == 0 || shape.grid_h == 0 || shape.grid_w == 0 || shape.channels == 0) {
        throw Error(ErrorKind::MalformedHeader, where + ": zero dimension in " + to_string(shape));
    }
    std::uint64_t count = 0;
    if (!binary::checked_mul(shape.samples, shape.grid_h, count) || !binary::checked_mul(count, shape.grid_w, count) ||
        !binary::checked_mul(count, shape.channels, count) || count > (std::uint64_t{1} << 61)) {
        throw Error(ErrorKind::MalformedHeader, where + ": dimensions overflow");
    }
    auto values = in.f32s(count, ErrorKind::TruncatedPayload, where + " payload");
    if (in.remaining() != 0) {
        throw Error(ErrorKind::MalformedHeader,
                    where + ": " + std::to_string(in.remaining()) + " trailing bytes after payload");
    }
    FeatureTensor tensor(shape, std::move(values));
    tensor.check_finite(where);
    return tensor;
}

inline void write_feature_file(const FeatureTensor& tensor, const std::filesystem::path& path) {
    binary::write_bytes(path, encode_feature_tensor(tensor));
}

inline FeatureTensor read_feature_file(const std::filesystem::path& path) {
    const auto bytes = binary::slurp(path);
    return decode_feature_tensor(bytes, path.string());
}

}

#endif
