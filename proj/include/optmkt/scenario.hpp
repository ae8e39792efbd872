// Uncertainty model for available wind capacity: a uniform distribution on
// [mu - sqrt(3)*sigma, mu + sqrt(3)*sigma], plus discrete surrogates of it
// (midpoint quadrature and seeded Monte Carlo) and expectation utilities.
//
// All values are immutable after construction and safe to share across
// threads. Expectations use a sequential compensated reduction so results
// are bit-stable regardless of caller parallelism.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "optmkt/common.hpp"

namespace optmkt {

/// Uniform distribution over [mu - sqrt(3)*sigma, mu + sqrt(3)*sigma].
/// mu and sigma^2 are the exact mean and variance of the distribution.
struct UniformScenarioModel {
    double mu = 0.0;     // mean available capacity (MW)
    double sigma = 0.0;  // standard deviation (MW)

    void validate() const {
        if (!(sigma > 0.0)) {
            throw ConfigError("scenario model: sigma must be > 0");
        }
        if (mu - kSqrt3 * sigma < 0.0) {
            throw ConfigError("scenario model: support must be nonnegative (mu - sqrt(3)*sigma >= 0)");
        }
    }
};

/// Returns the support endpoints (mu - sqrt(3)*sigma, mu + sqrt(3)*sigma).
inline std::pair<double, double> support(const UniformScenarioModel& model) {
    model.validate();
    return {model.mu - kSqrt3 * model.sigma, model.mu + kSqrt3 * model.sigma};
}

struct ScenarioPoint {
    double omega = 0.0;   // scenario value (MW of available wind)
    double weight = 0.0;  // probability mass
};

/// Finite weighted scenario collection. Weights are explicit (not an implied
/// 1/n) so non-uniform measures can plug in without interface changes.
struct ScenarioSet {
    std::vector<ScenarioPoint> points;

    std::size_t size() const { return points.size(); }

    /// Checks the set invariants: positive weights summing to 1 within 1e-12,
    /// and (when a model is given) every omega inside the model's support.
    void validate(const UniformScenarioModel* model = nullptr) const {
        StableSum total;
        for (const auto& p : points) {
            if (!(p.weight > 0.0)) {
                throw ConfigError("scenario set: weights must be positive");
            }
            total.add(p.weight);
        }
        if (std::abs(total.value() - 1.0) > 1e-12) {
            throw ConfigError("scenario set: weights must sum to 1 within 1e-12");
        }
        if (model != nullptr) {
            const auto [lo, hi] = support(*model);
            for (const auto& p : points) {
                if (p.omega < lo - 1e-12 || p.omega > hi + 1e-12) {
                    throw ConfigError("scenario set: omega outside model support");
                }
            }
        }
    }
};

/// Midpoint-rule discretization: n equally weighted midpoints of n equal
/// subintervals of the support. The empirical mean equals mu exactly, which
/// keeps the certainty surrogate free of quadrature error.
inline ScenarioSet discretize(const UniformScenarioModel& model, std::size_t n) {
    if (n == 0) {
        throw ConfigError("discretize: n must be >= 1");
    }
    const auto [lo, hi] = support(model);
    const double width = hi - lo;
    const double w = 1.0 / static_cast<double>(n);
    ScenarioSet set;
    set.points.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double omega = lo + width * ((static_cast<double>(k) + 0.5) / static_cast<double>(n));
        set.points.push_back({omega, w});
    }
    return set;
}

/// Identifier of the sampling algorithm, recorded in CSV metadata so output
/// artifacts are reproducible across platforms.
inline const char* rng_identifier() { return "mt19937_64/canonical53-v1"; }

/// Deterministic uniform(0,1) draws: top 53 bits of a mt19937_64 output.
/// Unlike std::uniform_real_distribution, this mapping is pinned by the
/// standardized engine and identical on every platform.
class Uniform01 {
public:
    explicit Uniform01(std::uint64_t seed) : engine_(seed) {}

    double next() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

private:
    std::mt19937_64 engine_;
};

/// n i.i.d. uniform draws over the support with weight 1/n each. The same
/// (model, n, seed) always produces bit-identical output.
inline ScenarioSet sample(const UniformScenarioModel& model, std::size_t n, std::uint64_t seed) {
    if (n == 0) {
        throw ConfigError("sample: n must be >= 1");
    }
    const auto [lo, hi] = support(model);
    const double width = hi - lo;
    const double w = 1.0 / static_cast<double>(n);
    Uniform01 rng(seed);
    ScenarioSet set;
    set.points.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        set.points.push_back({lo + width * rng.next(), w});
    }
    return set;
}

/// Weighted expectation of `valuation` over the set, accumulated in a fixed
/// sequential order with Neumaier compensation.
template <typename Valuation>
double expect(const ScenarioSet& set, Valuation&& valuation) {
    StableSum acc;
    for (const auto& p : set.points) {
        acc.add(p.weight * valuation(p.omega));
    }
    return acc.value();
}

}  // namespace optmkt
