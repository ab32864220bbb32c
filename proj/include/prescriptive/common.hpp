#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace prescriptive {

enum class ErrorCode {
  kInvalidConfig,
  kInvalidArgument,
  kDimensionMismatch,
  kLengthMismatch,
  kDegenerateLabels,
  kNonFiniteInput,
  kSingleArmDataset,
  kMissingCounterfactuals,
  kUnsupportedKind,
  kUnknownCell,
  kDuplicateUnitIds,
  kInvalidCanvas,
  kParse,
  kIo,
};

inline const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kDegenerateLabels: return "DegenerateLabels";
    case ErrorCode::kNonFiniteInput: return "NonFiniteInput";
    case ErrorCode::kSingleArmDataset: return "SingleArmDataset";
    case ErrorCode::kMissingCounterfactuals: return "MissingCounterfactuals";
    case ErrorCode::kUnsupportedKind: return "UnsupportedKind";
    case ErrorCode::kUnknownCell: return "UnknownCell";
    case ErrorCode::kDuplicateUnitIds: return "DuplicateUnitIds";
    case ErrorCode::kInvalidCanvas: return "InvalidCanvas";
    case ErrorCode::kParse: return "ParseError";
    case ErrorCode::kIo: return "IoError";
  }
  return "Unknown";
}

// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

enum class OutcomeDirection { kHigherIsBetter, kLowerIsBetter };

inline const char* DirectionName(OutcomeDirection d) {
  return d == OutcomeDirection::kHigherIsBetter ? "higher_is_better"
                                                : "lower_is_better";
}

inline OutcomeDirection ParseDirection(std::string_view text) {
  if (text == "higher_is_better" || text == "higher" || text == "maximize") {
    return OutcomeDirection::kHigherIsBetter;
  }
  if (text == "lower_is_better" || text == "lower" || text == "minimize") {
    return OutcomeDirection::kLowerIsBetter;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "unknown outcome direction '" + std::string(text) + "'");
}

// +1 when a larger outcome is good, -1 otherwise.
inline double DirectionSign(OutcomeDirection d) {
  return d == OutcomeDirection::kHigherIsBetter ? 1.0 : -1.0;
}

// Dense row-major feature matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  static Matrix FromRows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return {};
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != m.cols_) {
        throw Error(ErrorCode::kDimensionMismatch, "ragged matrix rows");
      }
      for (std::size_t c = 0; c < m.cols_; ++c) m(r, c) = rows[r][c];
    }
    return m;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double Sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
inline double Softplus(double z) {
  if (z > 0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

inline double Dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Round-trippable decimal form (17 significant digits).
inline std::string FormatDouble(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Short human form for reports.
inline std::string FormatShort(double v, int precision = 4) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

// FNV-1a, used for config digests.
inline std::uint64_t Fnv1a64(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string HexDigest(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace prescriptive
