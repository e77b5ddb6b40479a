#pragma once

namespace missnet {

// Rational-approximation erf/erfc after W. J. Cody's SPECFUN scheme.
// Absolute error is below 1e-15 over the real line (checked in the test
// suite against a frozen high-precision table).
double erf_cody(double x);
double erfc_cody(double x);

// Standard normal CDF and PDF. The CDF goes through erfc so the lower
// tail keeps relative precision.
double normal_cdf(double x);
double normal_pdf(double x);

}  // namespace missnet
