#pragma once

#include <array>
#include <span>
#include <string>

#include "advfl/types.hpp"

namespace advfl {

struct RegressionPoint {
  double x = 0.0;
  double y = 0.0;
};

/// y = a * ln(x) + b fitted by ordinary least squares.
struct RegressionFit {
  double a = 0.0;
  double b = 0.0;
  double r_squared = 0.0;
  Index used = 0;
  Index excluded = 0;  // points with x <= 0
  std::string x_domain;
};

/// Fits y on ln(x). Points with x <= 0 are dropped and counted. Points are
/// sorted first, so the result does not depend on input order.
RegressionFit fit_log_regression(std::span<const RegressionPoint> points,
                                 std::string x_domain = "as-given");

/// Reference sharing sweep: two-class non-IID, K=5, R=50, E=3.
struct SharingSweepRow {
  double sharing_percent;
  double natural_acc;  // percent
  double robust_acc;   // percent
};

inline constexpr std::array<SharingSweepRow, 11> kReferenceSharingSweep{{
    {0, 26.67, 24.54},
    {10, 62.4, 50.92},
    {20, 67.93, 51.14},
    {30, 67.23, 51.99},
    {40, 70.09, 54.79},
    {50, 69.91, 54.13},
    {60, 71.05, 55.54},
    {70, 70.33, 55.99},
    {80, 75.29, 51.51},
    {90, 73.31, 56.64},
    {100, 73.77, 56.16},
}};

/// Reference log curves for the sweep above (accuracy as a fraction).
struct ReferenceCurve {
  double a;
  double b;
  double r_squared;
};
inline constexpr ReferenceCurve kReferenceRobustCurve{0.0996, 0.3529, 0.6648};
inline constexpr ReferenceCurve kReferenceNaturalCurve{0.1558, 0.414, 0.7316};

struct DomainFits {
  RegressionFit percent;   // x = sharing percentage, 10..100
  RegressionFit fraction;  // x = sharing fraction, 0.1..1
};

/// Fits accuracy (as a fraction) against the sharing level under both x
/// conventions. `robust` selects the robust column, otherwise natural.
DomainFits fit_sharing_sweep(std::span<const SharingSweepRow> rows, bool robust);

}  // namespace advfl
