#pragma once

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace tmeta {

// Error taxonomy mirrored by the CLI exit codes: config 2, data 3, numeric 4.
enum class ErrorCategory { config, data, numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory cat, const std::string& module, const std::string& what)
      : std::runtime_error("[" + module + "] " + what), category_(cat), module_(module) {}
  ErrorCategory category() const { return category_; }
  const std::string& module() const { return module_; }

 private:
  ErrorCategory category_;
  std::string module_;
};

struct ConfigError : Error {
  ConfigError(const std::string& module, const std::string& what)
      : Error(ErrorCategory::config, module, what) {}
};
struct DataError : Error {
  DataError(const std::string& module, const std::string& what)
      : Error(ErrorCategory::data, module, what) {}
};
struct NumericError : Error {
  NumericError(const std::string& module, const std::string& what)
      : Error(ErrorCategory::numeric, module, what) {}
};

inline double expit(double t) { return 1.0 / (1.0 + std::exp(-t)); }

inline double clamp_probability(double p, double eps = 1e-6) {
  if (p < eps) return eps;
  if (p > 1.0 - eps) return 1.0 - eps;
  return p;
}

// Standard normal quantile (Acklam's rational approximation polished with one
// Newton step through erfc), accurate to ~1e-15 over (0,1).
double normal_quantile(double p);

// Fixed-format double for machine-readable output; %.12g round-trips the
// values we report and keeps files byte-stable across runs.
inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return std::string(buf);
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Sample standard deviation (n-1 denominator).
inline double sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace tmeta
