#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace lst {

// Base for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape disagreement between tensors (names both shapes in the message).
struct DimensionError : Error {
  using Error::Error;
};

// Invalid numeric argument (stride <= 0, mismatched optimizer state, ...).
struct ParameterError : Error {
  using Error::Error;
};

// Violated call contract (non-scalar loss, wrong history length, ...).
struct ContractError : Error {
  using Error::Error;
};

// Inconsistent model configuration (odd decision width, width mismatch).
struct ConfigError : Error {
  using Error::Error;
};

// Malformed file on disk (bad magic, truncation, version mismatch).
struct FormatError : Error {
  using Error::Error;
};

// Dataset cannot satisfy a request (class deficit, split overlap).
struct DataError : Error {
  using Error::Error;
};

using Shape = std::vector<int>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << "]";
  return os.str();
}

inline void check_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) +
                         " vs " + shape_str(b));
  }
}

// FNV-1a, used for dataset/config fingerprints in manifests.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

}  // namespace lst
