#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace hahn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Independent random streams derived from one top-level seed.
enum class Stream : std::uint32_t {
  Init = 1,
  Sampling = 2,
  Svm = 3,
  Subset = 4,
  Snapshot = 5,
};

inline std::mt19937_64 make_rng(std::uint64_t seed, Stream stream,
                                std::uint32_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), index};
  return std::mt19937_64(seq);
}

/// Uniform integer in [0, bound) independent of the standard library's
/// distribution implementation.
inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t bound) {
  const std::uint64_t range = static_cast<std::uint64_t>(bound);
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % range);
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return static_cast<std::size_t>(v % range);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(message);
}

inline void require_dims(bool condition, const std::string& message) {
  if (!condition) throw DimensionError(message);
}

}  // namespace hahn
