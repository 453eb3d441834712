#pragma once

namespace xlab {

// One-sided two-proportion z-test, H1: p1 > p2, pooled variance, no
// continuity correction.
struct ProportionTest {
  long long x1 = 0, n1 = 0, x2 = 0, n2 = 0;
  double z = 0.0;
  double p = 1.0;  // one-sided upper tail
  double alpha = 0.05;
  bool significant = false;
  // Pooled proportion was 0 or 1: z is undefined, p falls back to 0.5 when
  // the group proportions are equal, else 0/1 by the sign of the difference.
  bool degenerate = false;
};

ProportionTest two_prop_ztest_one_sided(long long x1, long long n1,
                                        long long x2, long long n2,
                                        double alpha = 0.05);

// 1 - Phi(z) via erfc; absolute error well under 1e-7 for |z| <= 8.
double normal_sf(double z);

}  // namespace xlab
