#include "xlab/stats.hpp"

#include <cmath>

#include "xlab/errors.hpp"

namespace xlab {

double normal_sf(double z) {
  require(std::isfinite(z), Errc::non_finite, "normal_sf: non-finite z");
  return 0.5 * std::erfc(z / std::sqrt(2.0));
}

ProportionTest two_prop_ztest_one_sided(long long x1, long long n1,
                                        long long x2, long long n2,
                                        double alpha) {
  require(n1 >= 1 && n2 >= 1, Errc::invalid_config, "z-test: n must be >= 1");
  require(x1 >= 0 && x1 <= n1 && x2 >= 0 && x2 <= n2, Errc::invalid_config,
          "z-test: counts out of range");
  ProportionTest t;
  t.x1 = x1;
  t.n1 = n1;
  t.x2 = x2;
  t.n2 = n2;
  t.alpha = alpha;
  double p1 = static_cast<double>(x1) / static_cast<double>(n1);
  double p2 = static_cast<double>(x2) / static_cast<double>(n2);
  double pooled = static_cast<double>(x1 + x2) / static_cast<double>(n1 + n2);
  if (pooled <= 0.0 || pooled >= 1.0) {
    t.degenerate = true;
    t.z = 0.0;
    if (p1 == p2) {
      t.p = 0.5;
    } else {
      t.p = p1 > p2 ? 0.0 : 1.0;
    }
  } else {
    double se = std::sqrt(pooled * (1.0 - pooled) *
                          (1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2)));
    t.z = (p1 - p2) / se;
    t.p = normal_sf(t.z);
  }
  t.significant = t.p < t.alpha;
  return t;
}

}  // namespace xlab
