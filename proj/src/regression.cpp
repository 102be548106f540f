#include "advfl/regression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace advfl {

RegressionFit fit_log_regression(std::span<const RegressionPoint> points, std::string x_domain) {
  std::vector<RegressionPoint> kept;
  RegressionFit fit;
  fit.x_domain = std::move(x_domain);
  for (const auto& p : points) {
    if (p.x > 0.0)
      kept.push_back(p);
    else
      ++fit.excluded;
  }
  if (kept.empty()) throw std::invalid_argument("fit_log_regression: no points with x > 0");
  if (kept.size() < 2) throw std::invalid_argument("fit_log_regression: need at least 2 points with x > 0");
  std::sort(kept.begin(), kept.end(), [](const RegressionPoint& l, const RegressionPoint& r) {
    return l.x != r.x ? l.x < r.x : l.y < r.y;
  });

  const auto n = static_cast<double>(kept.size());
  double mean_u = 0.0, mean_y = 0.0;
  for (const auto& p : kept) {
    mean_u += std::log(p.x);
    mean_y += p.y;
  }
  mean_u /= n;
  mean_y /= n;
  double suu = 0.0, suy = 0.0, syy = 0.0;
  for (const auto& p : kept) {
    const double du = std::log(p.x) - mean_u;
    const double dy = p.y - mean_y;
    suu += du * du;
    suy += du * dy;
    syy += dy * dy;
  }
  if (suu == 0.0) throw std::invalid_argument("fit_log_regression: all x values are equal");
  fit.a = suy / suu;
  fit.b = mean_y - fit.a * mean_u;
  double ss_res = 0.0;
  for (const auto& p : kept) {
    const double r = p.y - (fit.a * std::log(p.x) + fit.b);
    ss_res += r * r;
  }
  if (syy > 0.0)
    fit.r_squared = 1.0 - ss_res / syy;
  else
    fit.r_squared = ss_res == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
  fit.used = static_cast<Index>(kept.size());
  return fit;
}

DomainFits fit_sharing_sweep(std::span<const SharingSweepRow> rows, bool robust) {
  std::vector<RegressionPoint> pct, frac;
  for (const auto& r : rows) {
    const double y = (robust ? r.robust_acc : r.natural_acc) / 100.0;
    pct.push_back({r.sharing_percent, y});
    frac.push_back({r.sharing_percent / 100.0, y});
  }
  return {fit_log_regression(pct, "percent"), fit_log_regression(frac, "fraction")};
}

}  // namespace advfl
