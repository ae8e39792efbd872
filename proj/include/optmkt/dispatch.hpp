// Two-settlement dispatch: a day-ahead program against the certainty
// surrogate of available wind, per-scenario real-time re-dispatch with ramp
// bands, marginal (dual) prices, and the resulting participant payments.
//
// Costs are piecewise-linear convex block offers, so both programs reduce to
// deterministic merit-order stacking and the dual of the balance constraint
// is read off as the cost of serving the next increment of demand (the right
// derivative of optimal cost in demand). Ties between equal-cost blocks are
// dispatched in ascending participant-id order; tied blocks share one price,
// so payments do not depend on the tie-break.

#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "optmkt/common.hpp"
#include "optmkt/scenario.hpp"

namespace optmkt {

struct CostBlock {
    double capacity = 0.0;       // MW; kUnbounded permitted for the final block
    double marginal_cost = 0.0;  // $/MWh
};

/// Convex increasing production cost as ordered blocks with nondecreasing
/// marginal costs. cost(x) integrates the block prices up to x.
struct CostCurve {
    std::vector<CostBlock> blocks;

    void validate() const {
        if (blocks.empty()) {
            throw ConfigError("cost curve: at least one block required");
        }
        double prev_mc = -kUnbounded;
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            const auto& b = blocks[i];
            if (!(b.capacity > 0.0)) {
                throw ConfigError("cost curve: block capacities must be > 0");
            }
            if (is_unbounded(b.capacity) && i + 1 != blocks.size()) {
                throw ConfigError("cost curve: only the final block may be unbounded");
            }
            if (b.marginal_cost < prev_mc) {
                throw ConfigError("cost curve: marginal costs must be nondecreasing");
            }
            prev_mc = b.marginal_cost;
        }
    }

    double total_capacity() const {
        StableSum acc;
        for (const auto& b : blocks) {
            if (is_unbounded(b.capacity)) return kUnbounded;
            acc.add(b.capacity);
        }
        return acc.value();
    }

    /// Production cost at output x (x finite, within total capacity).
    double cost(double x) const {
        double remaining = x;
        StableSum acc;
        for (const auto& b : blocks) {
            if (remaining <= 0.0) break;
            const double take = std::min(remaining, b.capacity);
            acc.add(take * b.marginal_cost);
            remaining -= take;
        }
        if (remaining > 1e-9) {
            throw ConfigError("cost curve: output exceeds total capacity");
        }
        return acc.value();
    }

    static CostCurve flat(double marginal_cost) {
        return CostCurve{{{kUnbounded, marginal_cost}}};
    }
};

struct DispatchableGen {
    std::string id;
    double cap = kUnbounded;  // installed capacity (MW), may be unbounded
    double ramp = 0.0;        // max |x^omega - X| deviation from the set point
    CostCurve cost;

    void validate() const {
        if (id.empty()) throw ConfigError("dispatchable: id must be nonempty");
        if (!(cap >= 0.0)) throw ConfigError("dispatchable '" + id + "': cap must be >= 0");
        if (!(ramp >= 0.0)) throw ConfigError("dispatchable '" + id + "': ramp must be >= 0");
        cost.validate();
    }
};

struct RenewableGen {
    std::string id;
    double cap = kUnbounded;  // installed capacity (MW)
    CostCurve cost = CostCurve::flat(0.0);
    /// Available capacity per scenario. Empty means the identity map
    /// omega -> omega, whose certainty surrogate is exactly mu.
    std::function<double(double)> availability;
    /// Override for the day-ahead certainty surrogate; when absent it is the
    /// expected available capacity (exact mu for the identity map, midpoint
    /// quadrature otherwise).
    std::optional<double> surrogate;

    double available(double omega) const {
        const double a = availability ? availability(omega) : omega;
        if (a < -1e-12 || a > cap + 1e-9) {
            throw ConfigError("renewable '" + id + "': availability outside [0, cap]");
        }
        return std::clamp(a, 0.0, cap);
    }

    void validate() const {
        if (id.empty()) throw ConfigError("renewable: id must be nonempty");
        if (!(cap >= 0.0)) throw ConfigError("renewable '" + id + "': cap must be >= 0");
        cost.validate();
    }
};

struct MarketInstance {
    double demand = 0.0;  // aggregate inflexible demand d (MW)
    std::vector<DispatchableGen> dispatchables;
    std::vector<RenewableGen> renewables;
    UniformScenarioModel model;

    void validate() const {
        model.validate();
        if (!(demand >= 0.0)) throw ConfigError("market: demand must be >= 0");
        for (const auto& g : dispatchables) g.validate();
        for (const auto& r : renewables) r.validate();
        std::vector<std::string> ids;
        for (const auto& g : dispatchables) ids.push_back(g.id);
        for (const auto& r : renewables) ids.push_back(r.id);
        std::sort(ids.begin(), ids.end());
        if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
            throw ConfigError("market: participant ids must be unique");
        }
    }
};

/// Returns the certainty surrogate for available wind, the mean mu.
inline double certainty_surrogate(const UniformScenarioModel& model) {
    model.validate();
    return model.mu;
}

namespace detail {

// Grid size used when a custom availability map needs a quadrature surrogate.
inline constexpr std::size_t kSurrogateGridN = 4096;

inline double renewable_surrogate(const RenewableGen& r, const UniformScenarioModel& model) {
    double ce;
    if (r.surrogate) {
        ce = *r.surrogate;
    } else if (!r.availability) {
        ce = certainty_surrogate(model);  // exact: E[omega] = mu
    } else {
        ce = expect(discretize(model, kSurrogateGridN), [&](double w) { return r.available(w); });
    }
    return std::clamp(ce, 0.0, r.cap);
}

struct BalanceUnit {
    std::string id;
    double lo = 0.0;
    double hi = 0.0;  // may be kUnbounded
    const CostCurve* cost = nullptr;
};

struct BalanceResult {
    std::vector<double> x;  // aligned with the input units
    double price = 0.0;     // right-marginal system cost at the given demand
    double total_cost = 0.0;
    bool spare_capacity = true;  // false if demand exhausts all capacity
};

// Minimum-cost single-balance allocation over per-unit bands [lo, hi] with
// separable convex piecewise-linear costs: fill lower bounds, then stack the
// remaining block increments in ascending (marginal cost, id) order. The
// reported price is the marginal cost of the first increment left unfilled.
inline BalanceResult solve_balance(const std::vector<BalanceUnit>& units, double demand,
                                   const std::string& stage) {
    struct Piece {
        double mc;
        double span;  // may be kUnbounded
        std::size_t unit;
        std::size_t order;  // block index within the unit, for stable ties
        double used = 0.0;
    };

    StableSum lo_sum;
    bool hi_unbounded = false;
    StableSum hi_sum;
    for (const auto& u : units) {
        lo_sum.add(u.lo);
        if (is_unbounded(u.hi)) {
            hi_unbounded = true;
        } else {
            hi_sum.add(u.hi);
        }
    }
    const double mandatory = lo_sum.value();
    if (demand < mandatory - 1e-9) {
        throw InfeasibleError(stage + " infeasible: demand " + std::to_string(demand) +
                              " below the sum of minimum outputs " + std::to_string(mandatory));
    }
    if (!hi_unbounded && demand > hi_sum.value() + 1e-9) {
        throw InfeasibleError(stage + " infeasible: demand " + std::to_string(demand) +
                              " exceeds total capacity " + std::to_string(hi_sum.value()));
    }

    std::vector<Piece> pieces;
    for (std::size_t i = 0; i < units.size(); ++i) {
        const auto& u = units[i];
        double block_lo = 0.0;
        std::size_t order = 0;
        for (const auto& b : u.cost->blocks) {
            const double block_hi = is_unbounded(b.capacity) ? kUnbounded : block_lo + b.capacity;
            const double seg_lo = std::max(block_lo, u.lo);
            const double seg_hi = std::min(block_hi, u.hi);
            if (seg_hi > seg_lo) {
                pieces.push_back({b.marginal_cost, seg_hi - seg_lo, i, order});
            }
            if (is_unbounded(block_hi) || block_hi >= u.hi) break;
            block_lo = block_hi;
            ++order;
        }
    }
    std::sort(pieces.begin(), pieces.end(), [&](const Piece& a, const Piece& b) {
        if (a.mc != b.mc) return a.mc < b.mc;
        if (units[a.unit].id != units[b.unit].id) return units[a.unit].id < units[b.unit].id;
        return a.order < b.order;
    });

    BalanceResult res;
    res.x.resize(units.size());
    for (std::size_t i = 0; i < units.size(); ++i) res.x[i] = units[i].lo;

    double remaining = std::max(0.0, demand - mandatory);
    for (auto& p : pieces) {
        if (remaining <= 0.0) break;
        const double take = std::min(remaining, p.span);
        p.used = take;
        res.x[p.unit] += take;
        remaining -= take;
    }
    if (remaining > 1e-9) {
        throw InfeasibleError(stage + " infeasible: demand exceeds total capacity");
    }

    res.spare_capacity = false;
    for (const auto& p : pieces) {
        if (p.used < p.span) {
            res.price = p.mc;
            res.spare_capacity = true;
            break;
        }
    }
    if (!res.spare_capacity && !pieces.empty()) {
        res.price = pieces.back().mc;  // left derivative; demand+h is infeasible
    }

    StableSum cost_acc;
    for (std::size_t i = 0; i < units.size(); ++i) {
        cost_acc.add(units[i].cost->cost(res.x[i]));
    }
    res.total_cost = cost_acc.value();
    return res;
}

}  // namespace detail

struct ForwardResult {
    std::map<std::string, double> quantities;  // id -> X*
    double price = 0.0;                        // P*
    double total_cost = 0.0;
};

struct RealTimeResult {
    std::map<std::string, double> quantities;  // id -> x^{omega,*}
    double price = 0.0;                        // p^{omega,*}
    double total_cost = 0.0;
};

/// Day-ahead dispatch: minimize total cost with each renewable capped at its
/// certainty surrogate. Throws InfeasibleError when demand is not servable.
inline ForwardResult day_ahead(const MarketInstance& instance) {
    instance.validate();
    std::vector<detail::BalanceUnit> units;
    for (const auto& g : instance.dispatchables) {
        units.push_back({g.id, 0.0, g.cap, &g.cost});
    }
    for (const auto& r : instance.renewables) {
        units.push_back({r.id, 0.0, detail::renewable_surrogate(r, instance.model), &r.cost});
    }
    const auto sol = detail::solve_balance(units, instance.demand, "day-ahead");
    ForwardResult res;
    for (std::size_t i = 0; i < units.size(); ++i) res.quantities[units[i].id] = sol.x[i];
    res.price = sol.price;
    res.total_cost = sol.total_cost;
    return res;
}

/// Real-time re-dispatch in scenario omega: set points from the forward
/// result, dispatchables limited to their ramp band, renewables to realized
/// availability. Price is again the right-marginal system cost.
inline RealTimeResult real_time(const MarketInstance& instance, const ForwardResult& forward,
                                double omega) {
    std::vector<detail::BalanceUnit> units;
    for (const auto& g : instance.dispatchables) {
        const double set_point = forward.quantities.at(g.id);
        const double lo = std::max(0.0, is_unbounded(g.ramp) ? 0.0 : set_point - g.ramp);
        const double hi = std::min(g.cap, is_unbounded(g.ramp) ? g.cap : set_point + g.ramp);
        units.push_back({g.id, lo, hi, &g.cost});
    }
    for (const auto& r : instance.renewables) {
        units.push_back({r.id, 0.0, r.available(omega), &r.cost});
    }
    const auto sol = detail::solve_balance(units, instance.demand, "real-time");
    RealTimeResult res;
    for (std::size_t i = 0; i < units.size(); ++i) res.quantities[units[i].id] = sol.x[i];
    res.price = sol.price;
    res.total_cost = sol.total_cost;
    return res;
}

/// One participant's settlement for a scenario. Amounts are receipts: the
/// consumer's entry is negative (it pays P* times demand, nothing real-time).
struct PaymentRecord {
    std::string id;
    double forward_pay = 0.0;
    double realtime_pay = 0.0;
    double total = 0.0;
};

inline const char* consumer_id() { return "consumer"; }

/// Per-participant payments: P* X forward, p^omega (x - X) real-time, plus
/// the aggregate consumer's forward charge. Entries sum to zero exactly when
/// production balances demand.
inline std::vector<PaymentRecord> payments(const MarketInstance& instance,
                                           const ForwardResult& forward,
                                           const RealTimeResult& rt) {
    std::vector<PaymentRecord> out;
    auto add = [&](const std::string& id) {
        const double X = forward.quantities.at(id);
        const double x = rt.quantities.at(id);
        PaymentRecord rec;
        rec.id = id;
        rec.forward_pay = forward.price * X;
        rec.realtime_pay = rt.price * (x - X);
        rec.total = rec.forward_pay + rec.realtime_pay;
        out.push_back(rec);
    };
    for (const auto& g : instance.dispatchables) add(g.id);
    for (const auto& r : instance.renewables) add(r.id);
    PaymentRecord consumer;
    consumer.id = consumer_id();
    consumer.forward_pay = -forward.price * instance.demand;
    consumer.realtime_pay = 0.0;
    consumer.total = consumer.forward_pay;
    out.push_back(consumer);
    return out;
}

/// Closed-form real-time price of the stylized single-wind example:
/// (1/rho) when omega <= mu, zero otherwise.
inline double spot_price_example(double omega, double mu, double rho) {
    if (!(rho > 0.0 && rho <= 1.0)) {
        throw ConfigError("spot price: rho must lie in (0, 1]");
    }
    return omega <= mu ? 1.0 / rho : 0.0;
}

/// Scenarios in which the wind producer's energy-market payment is negative:
/// [mu - sqrt(3)*sigma, mu*(1 - rho)) when rho < sqrt(3)*sigma/mu, else empty.
inline Interval loss_region(double mu, double sigma, double rho) {
    if (!(rho > 0.0 && rho <= 1.0)) {
        throw ConfigError("loss region: rho must lie in (0, 1]");
    }
    const UniformScenarioModel model{mu, sigma};  // support() validates mu, sigma
    const auto [lo, hi] = support(model);
    (void)hi;
    const double upper = mu * (1.0 - rho);
    if (upper <= lo) return Interval{};
    return Interval{lo, upper, false};
}

}  // namespace optmkt
