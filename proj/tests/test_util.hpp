#ifndef SOFTPATCH_TESTS_TEST_UTIL_HPP
#define SOFTPATCH_TESTS_TEST_UTIL_HPP

#include <softpatch/softpatch.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <string>

namespace testutil {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("softpatch_test_" + std::to_string(rd()) + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

template<typename F>
softpatch::ErrorKind error_kind_of(F&& f) {
    try {
        f();
    } catch (const softpatch::Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected a softpatch::Error";
    return softpatch::ErrorKind::Io;
}

}

#define EXPECT_ERROR_KIND(expr, kind) EXPECT_EQ(testutil::error_kind_of([&] { (void)(expr); }), (kind))

#endif
