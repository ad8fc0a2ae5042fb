#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#define RBFPCA_VERSION "0.1.0"

namespace rbfpca {

// Errors split into two classes so the CLI can map them to exit codes:
// bad inputs/configuration -> 2, runtime numerical failure -> 1.
enum class ErrorClass { validation, numerical };

class Error : public std::runtime_error {
public:
  Error(ErrorClass cls, std::string kind, const std::string& msg)
      : std::runtime_error(kind + ": " + msg), cls_(cls), kind_(std::move(kind)) {}
  ErrorClass error_class() const { return cls_; }
  const std::string& kind() const { return kind_; }

private:
  ErrorClass cls_;
  std::string kind_;
};

#define RBFPCA_DEFINE_ERROR(NAME, CLS)                                        \
  struct NAME : Error {                                                       \
    explicit NAME(const std::string& msg)                                     \
        : Error(ErrorClass::CLS, #NAME, msg) {}                               \
  }

RBFPCA_DEFINE_ERROR(DimensionMismatch, validation);
RBFPCA_DEFINE_ERROR(DomainError, validation);
RBFPCA_DEFINE_ERROR(InvalidDf, validation);
RBFPCA_DEFINE_ERROR(ZeroVector, validation);
RBFPCA_DEFINE_ERROR(RankDeficient, validation);
RBFPCA_DEFINE_ERROR(InsufficientData, validation);
RBFPCA_DEFINE_ERROR(ParseError, validation);
RBFPCA_DEFINE_ERROR(DuplicateId, validation);
RBFPCA_DEFINE_ERROR(EmptyDataset, validation);
RBFPCA_DEFINE_ERROR(UnknownKey, validation);
RBFPCA_DEFINE_ERROR(DegenerateRange, validation);

RBFPCA_DEFINE_ERROR(NonSpdMatrix, numerical);
RBFPCA_DEFINE_ERROR(NonFiniteValue, numerical);
RBFPCA_DEFINE_ERROR(AllZeroIncrements, numerical);
RBFPCA_DEFINE_ERROR(NoRoot, numerical);
RBFPCA_DEFINE_ERROR(IterationCap, numerical);
RBFPCA_DEFINE_ERROR(SingularScatter, numerical);
RBFPCA_DEFINE_ERROR(SingularConditioning, numerical);
RBFPCA_DEFINE_ERROR(DegenerateSpectrum, numerical);
RBFPCA_DEFINE_ERROR(NumericUnderflow, numerical);

#undef RBFPCA_DEFINE_ERROR

// Warnings go to stderr by default; tests install a sink to capture them.
using WarnSink = std::function<void(const std::string&)>;
void set_warn_sink(WarnSink sink);  // empty function restores stderr
void warn(const std::string& msg);

inline bool all_finite(const double* p, long n) {
  for (long i = 0; i < n; ++i)
    if (!std::isfinite(p[i])) return false;
  return true;
}

// log(sum(exp(x))) with max subtraction; -inf for empty input.
double log_sum_exp(const std::vector<double>& x);

}  // namespace rbfpca
