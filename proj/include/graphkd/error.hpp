#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace graphkd {

// Domain error with a stable machine-readable kind. The CLI maps kinds to
// structured stderr output and a nonzero exit code.
class Error : public std::runtime_error {
public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(kind + ": " + message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

private:
  std::string kind_;
};

namespace errkind {
inline constexpr const char* kMissingFile = "missing_file";
inline constexpr const char* kMalformedJson = "malformed_json";
inline constexpr const char* kUnmappedCategory = "unmapped_category";
inline constexpr const char* kOutOfBoundsBox = "out_of_bounds_box";
inline constexpr const char* kEmptyProposalSet = "empty_proposal_set";
inline constexpr const char* kStrideMismatch = "stride_mismatch";
inline constexpr const char* kDimensionMismatch = "dimension_mismatch";
inline constexpr const char* kMisalignedGraphs = "misaligned_graphs";
inline constexpr const char* kMisalignedNodes = "misaligned_nodes";
inline constexpr const char* kNoTextPopulation = "no_text_population";
inline constexpr const char* kNoNodes = "no_nodes";
inline constexpr const char* kSchemaMismatch = "schema_mismatch";
inline constexpr const char* kEmptyEvalSplit = "empty_evaluation_split";
inline constexpr const char* kConfigError = "config_error";
inline constexpr const char* kBadCheckpoint = "bad_checkpoint";
inline constexpr const char* kPageTooSmall = "page_too_small";
inline constexpr const char* kEmptyGrid = "empty_grid";
inline constexpr const char* kDivergence = "divergence";
inline constexpr const char* kInvalidBox = "invalid_box";
inline constexpr const char* kIoError = "io_error";
}  // namespace errkind

[[noreturn]] inline void fail(const char* kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool cond, const char* kind, const std::string& message) {
  if (!cond) fail(kind, message);
}

}  // namespace graphkd
