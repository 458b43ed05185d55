#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace priming {

inline constexpr const char* kToolVersion = "prime/0.1.0";

using RecordId = std::uint64_t;

/// Embedding shards are row-per-record float32; keep the same layout in memory.
using RowMatrixXf =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Classifier heads are d x n, one column per class (column-major, Eigen default).
using HeadMatrix = Eigen::MatrixXf;

struct CaptionRecord {
  RecordId id = 0;
  std::string caption;
  std::optional<std::string> uri;

  bool operator==(const CaptionRecord&) const = default;
};

struct ClassSpec {
  int class_index = 0;
  std::string name;
  std::vector<std::string> aliases;
  Eigen::VectorXf text_embedding;
};

struct LabeledExample {
  Eigen::VectorXf embedding;
  int class_index = 0;
};

enum class ErrorKind {
  MalformedRecord,
  DuplicateId,
  MalformedHeader,
  TruncatedPayload,
  NonFiniteValue,
  CountMismatch,
  ZeroVector,
  NonContiguousIndices,
  DimensionMismatch,
  EmptyQuery,
  EmptyPool,
  EmptyCluster,
  DegenerateCentroid,
  UnknownClass,
  ShapeMismatch,
  LabelOutOfRange,
  EmptyTestSet,
  InsufficientShots,
  InvalidConfig,
  WrongStage,
  UnknownKey,
  TypeError,
  MissingRequired,
  IoError,
};

const char* to_string(ErrorKind kind);

class PipelineError : public std::runtime_error {
 public:
  PipelineError(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw PipelineError(kind, message);
}

}  // namespace priming
