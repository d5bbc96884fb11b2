#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mproto {

// Caller passed data that violates an operation's preconditions.
class input_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An internal contract was violated (bad index, shape mismatch between
// components that should have been consistent).
class contract_error : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Filesystem / parse failures.
class io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline const char* version_string() { return "mproto 0.1.0"; }

std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t fnv1a64_file(const std::string& path);

// Shortest round-trip decimal form of a double, locale-independent.
std::string dtos(double value);

}  // namespace mproto
