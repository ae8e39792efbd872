// Bilateral cash-settled call options between the wind producer (buyer) and
// the peaker (seller): per-scenario cashflows, expected option payoffs under
// the two-level spot price, the buyer's best-response volume, leader-follower
// equilibrium classification, and the closed-form variance and loss-region
// deltas the option induces.

#pragma once

#include <string>

#include "optmkt/common.hpp"
#include "optmkt/dispatch.hpp"
#include "optmkt/scenario.hpp"

namespace optmkt {

/// Maximum tradable option volume: sqrt(3)*sigma, the half-width of the
/// scenario support.
inline double delta_cap(const UniformScenarioModel& model) { return kSqrt3 * model.sigma; }

/// An option contract: upfront fee q per unit, strike K, volume delta.
struct TradeTriple {
    double q = 0.0;      // option price ($/unit)
    double K = 0.0;      // strike price ($/MWh)
    double delta = 0.0;  // volume (MW)

    void validate(double volume_cap = kUnbounded) const {
        if (!(q >= 0.0)) throw ConfigError("trade: q must be >= 0");
        if (!(K >= 0.0)) throw ConfigError("trade: K must be >= 0");
        if (!(delta >= 0.0)) throw ConfigError("trade: delta must be >= 0");
        if (delta > volume_cap + 1e-12) {
            throw ConfigError("trade: delta exceeds the volume cap");
        }
    }
};

enum class Side { buyer, seller };

inline const char* to_string(Side s) { return s == Side::buyer ? "buyer" : "seller"; }

struct OptionCashflows {
    double buyer_flow = 0.0;   // -q*delta + (spot-K)+ * delta
    double seller_flow = 0.0;  // exact negation of buyer_flow
};

/// Cash-settled call settlement at a realized spot price. Zero-sum by
/// construction: the seller flow is the negation of the buyer flow.
inline OptionCashflows option_cashflows(double spot, const TradeTriple& trade) {
    trade.validate();
    const double buyer = (-trade.q + pos(spot - trade.K)) * trade.delta;
    return {buyer, -buyer};
}

/// Expected option payoff to the buyer under the two-level spot price
/// (1/rho with probability 1/2, zero otherwise): -q*delta when the strike is
/// never in the money, else -(delta/2)(2q + K - 1/rho).
inline double expected_buyer_option_payoff(const UniformScenarioModel& model, double rho,
                                           const TradeTriple& trade) {
    if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("option payoff: rho must lie in (0, 1]");
    trade.validate(delta_cap(model));
    if (trade.K > 1.0 / rho) return -trade.q * trade.delta;
    return -(trade.delta / 2.0) * (2.0 * trade.q + trade.K - 1.0 / rho);
}

inline double expected_seller_option_payoff(const UniformScenarioModel& model, double rho,
                                            const TradeTriple& trade) {
    return -expected_buyer_option_payoff(model, rho, trade);
}

enum class ResponseKind { zero, full, interval };

/// The buyer's optimal volume set for a posted (q, K): {0}, {cap}, or the
/// whole interval [0, cap] when the expected payoff is flat in delta.
struct BestResponseSet {
    ResponseKind kind = ResponseKind::zero;
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double d) const { return d >= lo - 1e-12 && d <= hi + 1e-12; }
    /// Representative volume: the cap except in the strict-zero case, matching
    /// the convention that indifferent buyers trade the full volume.
    double canonical() const { return kind == ResponseKind::zero ? lo : hi; }
};

/// Default classification tolerance, relative to the spot level 1/rho.
inline double equilibrium_tol(double rho) { return 1e-9 / rho; }

/// Best response of the buyer to a posted (q, K): expected payoff is linear
/// in delta with slope -(2q + K - 1/rho)/2 (or -q when K > 1/rho), so the
/// optimum sits at an endpoint unless the slope vanishes.
inline BestResponseSet best_response(double q, double K, const UniformScenarioModel& model,
                                     double rho) {
    if (!(q >= 0.0 && K >= 0.0)) throw ConfigError("best response: q, K must be >= 0");
    if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("best response: rho must lie in (0, 1]");
    const double cap = delta_cap(model);
    const double tol = equilibrium_tol(rho);
    const double gap = 2.0 * q + K - 1.0 / rho;
    if (K > 1.0 / rho + tol) return {ResponseKind::zero, 0.0, 0.0};
    if (gap > tol) return {ResponseKind::zero, 0.0, 0.0};
    if (gap < -tol) return {ResponseKind::full, cap, cap};
    return {ResponseKind::interval, 0.0, cap};
}

enum class EquilibriumClass { N1, N2, none };

inline const char* to_string(EquilibriumClass c) {
    switch (c) {
        case EquilibriumClass::N1: return "N1";
        case EquilibriumClass::N2: return "N2";
        default: return "none";
    }
}

/// Leader-follower classification of a posted (q, K): N2 on the boundary
/// 2q + K = 1/rho (trades happen, seller indifferent), N1 above it (no trade
/// is the buyer's best response), no equilibrium below it (the seller loses
/// in expectation at the buyer's full response and would deviate).
inline EquilibriumClass classify_equilibrium(double q, double K, double rho, double tol) {
    if (!(tol > 0.0)) throw ConfigError("classify: tol must be > 0");
    if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("classify: rho must lie in (0, 1]");
    const double gap = 2.0 * q + K - 1.0 / rho;
    if (std::abs(gap) <= tol) return EquilibriumClass::N2;
    if (gap > tol) return EquilibriumClass::N1;
    return EquilibriumClass::none;
}

inline EquilibriumClass classify_equilibrium(double q, double K, double rho) {
    return classify_equilibrium(q, K, rho, equilibrium_tol(rho));
}

/// Change in payment variance induced by a boundary trade at full volume:
/// var[pi + V] - var[pi] = 2cov(pi, V) + var[V] = -(3/2) q K sigma^2.
/// Negative whenever q, K > 0, i.e. the option strictly reduces volatility
/// for both counterparties (the seller's delta is identical by symmetry).
inline double variance_delta_analytic(double q, double K, double sigma) {
    if (!(q >= 0.0 && K >= 0.0)) throw ConfigError("variance delta: q, K must be >= 0");
    if (!(sigma > 0.0)) throw ConfigError("variance delta: sigma must be > 0");
    return -1.5 * q * K * sigma * sigma;
}

/// Scenarios where the wind producer still loses money after buying the
/// boundary trade (K = 1/rho - 2q) at full volume:
/// [mu - sqrt(3)*sigma, mu(1 - rho) - rho*q*sqrt(3)*sigma), clipped to the
/// support. Always contained in the option-free loss region, strictly so
/// when q > 0 and that region is nonempty.
inline Interval negative_region_with_option(double q, double mu, double sigma, double rho) {
    if (!(rho > 0.0 && rho <= 1.0)) {
        throw ConfigError("loss region with option: rho must lie in (0, 1]");
    }
    if (!(q >= 0.0 && q <= 1.0 / (2.0 * rho) + 1e-12)) {
        throw ConfigError("loss region with option: q must lie in [0, 1/(2 rho)]");
    }
    const UniformScenarioModel model{mu, sigma};
    const auto [lo, hi] = support(model);
    (void)hi;
    const double upper = mu * (1.0 - rho) - rho * q * kSqrt3 * sigma;
    if (upper <= lo) return Interval{};
    return Interval{lo, upper, false};
}

}  // namespace optmkt
