#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace povmap {

enum class ErrorKind {
  dimension,
  geometry,
  invalid_argument,
  numeric,
  unsupported_topology,
  corrupt_checkpoint,
  version_mismatch,
  shape_mismatch,
  degenerate_data,
  unfitted_model,
  unbalanceable,
  out_of_bounds,
  range,
  uniqueness,
  missing_input,
  malformed_input,
  referential,
  fold,
  insufficient_data,
  divergence,
  graph,
  io,
  config,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::geometry: return "geometry";
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::unsupported_topology: return "unsupported-topology";
    case ErrorKind::corrupt_checkpoint: return "corrupt-checkpoint";
    case ErrorKind::version_mismatch: return "version-mismatch";
    case ErrorKind::shape_mismatch: return "shape-mismatch";
    case ErrorKind::degenerate_data: return "degenerate-data";
    case ErrorKind::unfitted_model: return "unfitted-model";
    case ErrorKind::unbalanceable: return "unbalanceable";
    case ErrorKind::out_of_bounds: return "out-of-bounds";
    case ErrorKind::range: return "range";
    case ErrorKind::uniqueness: return "uniqueness";
    case ErrorKind::missing_input: return "missing-input";
    case ErrorKind::malformed_input: return "malformed-input";
    case ErrorKind::referential: return "referential";
    case ErrorKind::fold: return "fold";
    case ErrorKind::insufficient_data: return "insufficient-data";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::graph: return "graph";
    case ErrorKind::io: return "io";
    case ErrorKind::config: return "config";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace povmap
