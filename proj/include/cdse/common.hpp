// Copyright 2026 CDSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef CDSE_COMMON_HPP_
#define CDSE_COMMON_HPP_

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdse {

// Error taxonomy. The CLI maps these onto its exit codes: usage/config -> 1,
// data/io/parse/format -> 2, numeric -> 3.
enum class ErrorKind {
  kDimension,   // shape mismatch between operands
  kParameter,   // invalid argument value (stride <= 0, axis out of range, ...)
  kDomain,      // input outside the mathematical domain (zero-energy reference)
  kContract,    // API contract violation (non-scalar loss, missing grad)
  kConfig,      // invalid configuration (overlapping noise kinds, bad variant)
  kIo,          // filesystem failure
  kParse,       // malformed file content
  kFormat,      // unsupported-but-wellformed file format (stereo WAV)
  kNumeric,     // NaN/Inf produced, check threshold exceeded
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void Throw(ErrorKind kind, const std::string& msg) {
  throw Error(kind, msg);
}

namespace detail {
inline void FormatInto(std::ostringstream&) {}
template <typename A, typename... Rest>
void FormatInto(std::ostringstream& os, A&& a, Rest&&... rest) {
  os << std::forward<A>(a);
  FormatInto(os, std::forward<Rest>(rest)...);
}
}  // namespace detail

template <typename... Args>
[[noreturn]] void ThrowF(ErrorKind kind, Args&&... args) {
  std::ostringstream os;
  detail::FormatInto(os, std::forward<Args>(args)...);
  throw Error(kind, os.str());
}

#define CDSE_CHECK(cond, kind, ...)                    \
  do {                                                 \
    if (!(cond)) ::cdse::ThrowF((kind), __VA_ARGS__);  \
  } while (0)

using Shape = std::vector<int>;

inline std::string ShapeStr(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline int64_t NumelOf(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

}  // namespace cdse

#endif  // CDSE_COMMON_HPP_
