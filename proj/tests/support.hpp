#pragma once

#include "gsplice/error.hpp"
#include "gsplice/image.hpp"
#include "gsplice/rng.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

namespace testing_support {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string pattern = (fs::temp_directory_path() / "gsplice-test-XXXXXX").string();
    if (!::mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
    path_ = pattern;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

inline gsplice::Planed random_plane(gsplice::Index rows, gsplice::Index cols, gsplice::CounterRng& rng, double lo = 0.0,
                                    double hi = 1.0) {
  gsplice::Planed p(rows, cols);
  for (gsplice::Index i = 0; i < p.size(); ++i) p.data()[i] = rng.uniform(lo, hi);
  return p;
}

inline gsplice::Image3d random_image(gsplice::Index rows, gsplice::Index cols, gsplice::CounterRng& rng, double lo = 0.0,
                                     double hi = 1.0) {
  return {random_plane(rows, cols, rng, lo, hi), random_plane(rows, cols, rng, lo, hi),
          random_plane(rows, cols, rng, lo, hi)};
}

inline std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace testing_support

/// Expects `stmt` to throw gsplice::Error of the given kind.
#define EXPECT_ERROR_KIND(stmt, expected_kind)                                            \
  do {                                                                                    \
    try {                                                                                 \
      stmt;                                                                               \
      ADD_FAILURE() << "expected " << gsplice::to_string(expected_kind) << ", no throw";  \
    } catch (const gsplice::Error& e_) {                                                  \
      EXPECT_EQ(e_.kind(), expected_kind) << e_.what();                                   \
    }                                                                                     \
  } while (0)
