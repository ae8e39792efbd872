// Shared error types, numeric helpers, and constants used across the library.

#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace optmkt {

/// Invalid configuration or violated type invariant. CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical or modeling-assumption failure (non-convergence, non-monotone
/// acceptance, unsupported problem shape). CLI exit code 3.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Infeasible optimization problem (demand not servable). CLI exit code 4.
class InfeasibleError : public std::runtime_error {
public:
    explicit InfeasibleError(const std::string& msg) : std::runtime_error(msg) {}
};

inline constexpr double kSqrt3 = std::numbers::sqrt3_v<double>;

/// Sentinel for unbounded capacities and ramp limits. Arithmetic never
/// multiplies the sentinel; it only participates in min/max and comparisons.
inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

inline bool is_unbounded(double x) { return std::isinf(x) && x > 0; }

inline double pos(double z) { return z > 0.0 ? z : 0.0; }

/// Neumaier-compensated accumulator. Sequential and deterministic; keeps
/// weight sums and expectations accurate to ~1 ulp even at 1e6 terms.
class StableSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;  // half-open: [lo, hi)
    bool empty = true;

    bool contains(double x) const { return !empty && x >= lo && x < hi; }
    double length() const { return empty ? 0.0 : hi - lo; }
};

}  // namespace optmkt
