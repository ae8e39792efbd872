// Centralized option market: the market maker M broadcasts an allowable box
// of trade triples, collects per-participant acceptability sets, clears
// buyer/seller volumes, allocates per-scenario exercise, and settles cash in
// two stages. The merchandising surplus MS is M's net position per scenario:
//
//   MS = sum_r q_r D_r - sum_g q_g D_g          (day-ahead fees)
//        - sum_r (p-K_r)+ D_r + sum_g (p-K_g)+ d_g   (real-time settlement)
//
// Clearing maximizes E[MS] (or targets MS = 0 scenario-wise in zero-ms
// mode). The solution is provably optimal for risk-neutral bids under a
// two-level spot price, where acceptability reduces to half-spaces around
// the line (1/w) q + K = h; other shapes go through a best-effort finite
// search documented below.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "optmkt/bilateral.hpp"
#include "optmkt/common.hpp"
#include "optmkt/dispatch.hpp"
#include "optmkt/risk.hpp"
#include "optmkt/scenario.hpp"

namespace optmkt {

/// The broadcast set of allowable trades: a box [eps, q_max] x [eps, K_max]
/// x [eps, delta_max]. The strictly positive lower bound eps stands in for
/// the open intervals of the protocol; optima lie on closed boundaries.
struct AllowableBox {
    double q_max = 0.0;
    double K_max = 0.0;
    double delta_max = 0.0;
    double epsilon = 1e-9;

    void validate() const {
        if (!(epsilon > 0.0)) throw ConfigError("allowable box: epsilon must be > 0");
        if (!(q_max > epsilon && K_max > epsilon && delta_max > epsilon)) {
            throw ConfigError("allowable box: bounds must exceed epsilon");
        }
    }

    bool contains(const TradeTriple& t) const {
        const double slack = 1e-12;
        return t.q >= epsilon - slack && t.q <= q_max + slack && t.K >= epsilon - slack &&
               t.K <= K_max + slack && t.delta >= epsilon - slack && t.delta <= delta_max + slack;
    }
};

/// a*q + b*K + c*delta <= r (less) or >= r.
struct LinearConstraint {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    double r = 0.0;
    bool less = true;

    bool satisfied(const TradeTriple& t) const {
        const double v = a * t.q + b * t.K + c * t.delta;
        return less ? v <= r + 1e-12 : v >= r - 1e-12;
    }
};

/// A participant's acceptable region inside the allowable box: either a list
/// of linear half-spaces (closed form, when derivable) or a membership
/// oracle. Construction validates a nonempty intersection with the box by
/// grid probing.
struct AcceptabilitySet {
    AllowableBox box;
    std::vector<LinearConstraint> constraints;
    std::function<bool(const TradeTriple&)> oracle;

    bool contains(const TradeTriple& t) const {
        if (!box.contains(t)) return false;
        if (!constraints.empty()) {
            for (const auto& c : constraints) {
                if (!c.satisfied(t)) return false;
            }
            return true;
        }
        return oracle(t);
    }

    void validate() const {
        box.validate();
        if (constraints.empty() && !oracle) {
            throw ConfigError("acceptability: needs constraints or a membership oracle");
        }
        constexpr int kProbe = 5;
        auto coord = [](double lo, double hi, int i) {
            return lo + (hi - lo) * static_cast<double>(i) / (kProbe - 1);
        };
        for (int i = 0; i < kProbe; ++i) {
            for (int j = 0; j < kProbe; ++j) {
                for (int k = 0; k < kProbe; ++k) {
                    const TradeTriple t{coord(box.epsilon, box.q_max, i),
                                        coord(box.epsilon, box.K_max, j),
                                        coord(box.epsilon, box.delta_max, k)};
                    if (contains(t)) return;
                }
            }
        }
        throw ConfigError("acceptability: empty intersection with the allowable box");
    }
};

namespace detail {

struct TwoLevelSpot {
    double high = 0.0;       // the in-the-money spot level h
    double mass_high = 0.0;  // probability w of the high level
};

/// Detects a spot process taking exactly the two values {0, h}. Values are
/// compared exactly: identical formulas produce identical doubles.
inline std::optional<TwoLevelSpot> detect_two_level(const std::vector<double>& spot,
                                                    const ScenarioSet& scenarios) {
    double lo = spot.empty() ? 0.0 : spot[0];
    double hi = lo;
    for (double p : spot) {
        lo = std::min(lo, p);
        hi = std::max(hi, p);
    }
    if (!(lo == 0.0 && hi > 0.0)) return std::nullopt;
    StableSum mass;
    for (std::size_t i = 0; i < spot.size(); ++i) {
        if (spot[i] != lo && spot[i] != hi) return std::nullopt;
        if (spot[i] == hi) mass.add(scenarios.points[i].weight);
    }
    const double w = mass.value();
    if (!(w > 0.0 && w < 1.0)) return std::nullopt;
    return TwoLevelSpot{hi, w};
}

inline double expected_payout(const std::vector<double>& spot, const ScenarioSet& scenarios,
                              double K) {
    StableSum acc;
    for (std::size_t i = 0; i < spot.size(); ++i) {
        acc.add(scenarios.points[i].weight * pos(spot[i] - K));
    }
    return acc.value();
}

}  // namespace detail

/// Risk-neutral acceptability: the trade must not lower the participant's
/// expected total payment, which reduces to E[option flow] >= 0 since the
/// energy payment is unaffected by the trade. Under a two-level {0, h} spot
/// this is the single half-space (1/w) q + K <= h (buyer; >= for seller),
/// which is emitted in closed form; otherwise a membership oracle is used.
inline AcceptabilitySet risk_neutral_acceptability(Side side, const std::vector<double>& pi,
                                                   const std::vector<double>& spot,
                                                   const ScenarioSet& scenarios,
                                                   const AllowableBox& box) {
    if (pi.size() != scenarios.size() || spot.size() != scenarios.size()) {
        throw ConfigError("acceptability: payment/spot vectors must align with scenarios");
    }
    AcceptabilitySet set;
    set.box = box;
    if (const auto tl = detail::detect_two_level(spot, scenarios)) {
        set.constraints.push_back(
            {1.0 / tl->mass_high, 1.0, 0.0, tl->high, side == Side::buyer});
    }
    set.oracle = [side, spot, scenarios](const TradeTriple& t) {
        StableSum acc;
        for (std::size_t i = 0; i < spot.size(); ++i) {
            acc.add(scenarios.points[i].weight * option_flow(side, spot[i], t));
        }
        return acc.value() >= -1e-12;
    };
    set.validate();
    return set;
}

/// CVaR acceptability at level alpha wrapped as a membership oracle; at
/// alpha = 0 it coincides with the risk-neutral set.
inline AcceptabilitySet cvar_acceptability(Side side, RiskLevel alpha,
                                           const std::vector<double>& pi,
                                           const std::vector<double>& spot,
                                           const ScenarioSet& scenarios,
                                           const AllowableBox& box) {
    AcceptabilitySet set;
    set.box = box;
    set.oracle = [side, alpha, pi, spot, scenarios](const TradeTriple& t) {
        return cvar_accepts(t, side, alpha, pi, spot, scenarios);
    };
    set.validate();
    return set;
}

struct ParticipantBid {
    std::string id;
    Side side = Side::buyer;
    AcceptabilitySet acceptability;

    void validate() const {
        if (id.empty()) throw ConfigError("bid: id must be nonempty");
        acceptability.validate();
    }
};

enum class ClearingObjective { max_ms, zero_ms };

struct ClearingProblem {
    std::vector<ParticipantBid> bids;
    ScenarioSet scenarios;
    std::vector<double> spot;
    ClearingObjective objective = ClearingObjective::max_ms;
    /// Optional seller volume/exercise split fractions (id -> fraction,
    /// summing to 1). Empty means greedy allocation.
    std::map<std::string, double> alpha_split;

    void validate() const {
        scenarios.validate();
        if (spot.size() != scenarios.size()) {
            throw ConfigError("clearing: spot vector must align with scenarios");
        }
        int buyers = 0;
        int sellers = 0;
        std::vector<std::string> ids;
        for (const auto& b : bids) {
            b.validate();
            (b.side == Side::buyer ? buyers : sellers) += 1;
            ids.push_back(b.id);
        }
        if (buyers < 1 || sellers < 1) {
            throw ConfigError("clearing: need at least one buyer and one seller");
        }
        std::sort(ids.begin(), ids.end());
        if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
            throw ConfigError("clearing: participant ids must be unique");
        }
        if (!alpha_split.empty()) {
            StableSum total;
            for (const auto& [id, frac] : alpha_split) {
                if (!(frac >= 0.0)) throw ConfigError("clearing: alpha fractions must be >= 0");
                bool is_seller = false;
                for (const auto& b : bids) {
                    if (b.id == id && b.side == Side::seller) is_seller = true;
                }
                if (!is_seller) {
                    throw ConfigError("clearing: alpha split names unknown seller '" + id + "'");
                }
                total.add(frac);
            }
            if (std::abs(total.value() - 1.0) > 1e-12) {
                throw ConfigError("clearing: alpha fractions must sum to 1");
            }
        }
    }
};

struct ClearedTrade {
    Side side = Side::buyer;
    TradeTriple trade;
};

struct ClearingSolution {
    std::map<std::string, ClearedTrade> trades;  // empty map <=> empty clearing
    std::map<std::string, double> alpha_split;   // copied from the problem
    ScenarioSet scenarios;
    std::vector<double> spot;
    std::map<std::string, std::vector<double>> exercise;  // seller -> per-scenario delta
    std::vector<double> ms;                               // per-scenario MS

    bool empty() const { return trades.empty(); }
};

/// Exercise demand at spot p: every buyer exercises its full volume when
/// p >= K_r (cash settlement; the boundary case pays zero either way).
inline double exercise_demand(const ClearingSolution& sol, double p) {
    StableSum demand;
    for (const auto& [id, ct] : sol.trades) {
        if (ct.side == Side::buyer && p >= ct.trade.K) demand.add(ct.trade.delta);
    }
    return demand.value();
}

/// Allocates the scenario's exercise demand across sellers: by the
/// configured alpha split when present, else greedily in descending
/// in-the-money order (p - K_g)+, ties by ascending id.
inline std::map<std::string, double> exercise_allocation(const ClearingSolution& sol, double p) {
    std::map<std::string, double> out;
    const double demand = exercise_demand(sol, p);
    if (!sol.alpha_split.empty()) {
        for (const auto& [id, ct] : sol.trades) {
            if (ct.side != Side::seller) continue;
            const auto it = sol.alpha_split.find(id);
            const double frac = it == sol.alpha_split.end() ? 0.0 : it->second;
            out[id] = frac * demand;
        }
        return out;
    }
    std::vector<std::pair<std::string, const TradeTriple*>> sellers;
    for (const auto& [id, ct] : sol.trades) {
        if (ct.side == Side::seller) sellers.push_back({id, &ct.trade});
    }
    std::sort(sellers.begin(), sellers.end(), [&](const auto& a, const auto& b) {
        const double pa = pos(p - a.second->K);
        const double pb = pos(p - b.second->K);
        if (pa != pb) return pa > pb;
        return a.first < b.first;
    });
    double remaining = demand;
    for (const auto& [id, trade] : sellers) {
        const double take = std::min(remaining, trade->delta);
        out[id] = take;
        remaining -= take;
    }
    if (remaining > 1e-9) {
        throw NumericalError("clearing: exercise demand exceeds total seller volume");
    }
    return out;
}

/// Merchandising surplus at spot p given an exercise allocation.
inline double ms_at(const ClearingSolution& sol, double p,
                    const std::map<std::string, double>& allocation) {
    StableSum acc;
    for (const auto& [id, ct] : sol.trades) {
        if (ct.side == Side::buyer) {
            acc.add(ct.trade.q * ct.trade.delta);
            acc.add(-pos(p - ct.trade.K) * ct.trade.delta);
        } else {
            acc.add(-ct.trade.q * ct.trade.delta);
            acc.add(pos(p - ct.trade.K) * allocation.at(id));
        }
    }
    return acc.value();
}

inline double ms_at(const ClearingSolution& sol, double p) {
    return ms_at(sol, p, exercise_allocation(sol, p));
}

inline double expected_ms(const ClearingSolution& sol) {
    StableSum acc;
    for (std::size_t i = 0; i < sol.ms.size(); ++i) {
        acc.add(sol.scenarios.points[i].weight * sol.ms[i]);
    }
    return acc.value();
}

struct LedgerEntry {
    std::string party;
    double amount = 0.0;  // receipt (+) or payment (-)
};

inline const char* market_maker_id() { return "M"; }

/// Day-ahead settlement: buyers pay their fee q*delta to M, M pays each
/// seller its fee. Entries (participants then M) sum to zero.
inline std::vector<LedgerEntry> settle_day_ahead(const ClearingSolution& sol) {
    std::vector<LedgerEntry> ledger;
    StableSum m;
    for (const auto& [id, ct] : sol.trades) {
        const double fee = ct.trade.q * ct.trade.delta;
        const double amount = ct.side == Side::buyer ? -fee : fee;
        ledger.push_back({id, amount});
        m.add(-amount);
    }
    ledger.push_back({market_maker_id(), m.value()});
    return ledger;
}

/// Real-time settlement at spot p: M pays (p-K_r)+ delta_r to each buyer;
/// seller g pays (p-K_g)+ delta_g^omega to M. Sums to zero.
inline std::vector<LedgerEntry> settle_real_time_at(const ClearingSolution& sol, double p) {
    const auto allocation = exercise_allocation(sol, p);
    std::vector<LedgerEntry> ledger;
    StableSum m;
    for (const auto& [id, ct] : sol.trades) {
        double amount;
        if (ct.side == Side::buyer) {
            amount = pos(p - ct.trade.K) * ct.trade.delta;
        } else {
            amount = -pos(p - ct.trade.K) * allocation.at(id);
        }
        ledger.push_back({id, amount});
        m.add(-amount);
    }
    ledger.push_back({market_maker_id(), m.value()});
    return ledger;
}

inline std::vector<LedgerEntry> settle_real_time(const ClearingSolution& sol,
                                                 std::size_t scenario_index) {
    if (scenario_index >= sol.spot.size()) {
        throw ConfigError("settlement: scenario index out of range");
    }
    return settle_real_time_at(sol, sol.spot[scenario_index]);
}

inline double ms_day_ahead(const ClearingSolution& sol) {
    StableSum acc;
    for (const auto& [id, ct] : sol.trades) {
        acc.add((ct.side == Side::buyer ? 1.0 : -1.0) * ct.trade.q * ct.trade.delta);
    }
    return acc.value();
}

namespace detail {

inline ClearingSolution finalize_solution(const ClearingProblem& problem,
                                          std::map<std::string, ClearedTrade> trades) {
    ClearingSolution sol;
    sol.trades = std::move(trades);
    sol.alpha_split = problem.alpha_split;
    sol.scenarios = problem.scenarios;
    sol.spot = problem.spot;
    sol.ms.resize(problem.spot.size(), 0.0);
    if (sol.empty()) return sol;
    for (const auto& [id, ct] : sol.trades) {
        if (ct.side == Side::seller) {
            sol.exercise[id].resize(problem.spot.size(), 0.0);
        }
    }
    for (std::size_t i = 0; i < problem.spot.size(); ++i) {
        const auto allocation = exercise_allocation(sol, problem.spot[i]);
        for (const auto& [id, delta] : allocation) {
            sol.exercise[id][i] = delta;
        }
        sol.ms[i] = ms_at(sol, problem.spot[i], allocation);
    }
    return sol;
}

// Post-hoc check of the clearing constraints: volume balance, exercise
// bounds and balance, and acceptability membership of every cleared trade.
inline void assert_solution(const ClearingProblem& problem, const ClearingSolution& sol) {
    if (sol.empty()) return;
    StableSum buy, sell;
    for (const auto& [id, ct] : sol.trades) {
        (ct.side == Side::buyer ? buy : sell).add(ct.trade.delta);
        bool found = false;
        for (const auto& b : problem.bids) {
            if (b.id == id) {
                found = true;
                if (b.side != ct.side || !b.acceptability.contains(ct.trade)) {
                    throw NumericalError("clearing: cleared trade for '" + id +
                                         "' violates its acceptability set");
                }
            }
        }
        if (!found) throw NumericalError("clearing: trade for unknown participant '" + id + "'");
    }
    if (std::abs(buy.value() - sell.value()) > 1e-9) {
        throw NumericalError("clearing: buyer/seller volume imbalance");
    }
    for (std::size_t i = 0; i < problem.spot.size(); ++i) {
        const double p = problem.spot[i];
        StableSum filled;
        for (const auto& [id, per_scenario] : sol.exercise) {
            const double d = per_scenario[i];
            const double cap = sol.trades.at(id).trade.delta;
            if (d < -1e-12 || d > cap + 1e-9) {
                throw NumericalError("clearing: exercise outside [0, delta] for '" + id + "'");
            }
            filled.add(d);
        }
        if (std::abs(filled.value() - exercise_demand(sol, p)) > 1e-9) {
            throw NumericalError("clearing: exercise does not balance demand in a scenario");
        }
    }
}

// Boundary line a*q + K = r of a single-half-space acceptability set,
// intersected with the box; returns the point on it nearest the box center,
// or nothing when the line misses the box.
inline std::optional<TradeTriple> project_center_to_boundary(const AcceptabilitySet& set) {
    if (set.constraints.size() != 1) return std::nullopt;
    const auto& c = set.constraints.front();
    if (c.c != 0.0 || c.b != 1.0 || !(c.a > 0.0)) return std::nullopt;
    const auto& box = set.box;
    const double cq = 0.5 * (box.epsilon + box.q_max);
    const double cK = 0.5 * (box.epsilon + box.K_max);
    // Orthogonal projection of (cq, cK) onto a*q + K = r.
    const double t = (c.r - c.a * cq - cK) / (c.a * c.a + 1.0);
    double q = cq + c.a * t;
    double K = cK + t;
    if (q < box.epsilon || q > box.q_max) {
        q = std::clamp(q, box.epsilon, box.q_max);
        K = c.r - c.a * q;
    }
    if (K < box.epsilon || K > box.K_max) {
        K = std::clamp(K, box.epsilon, box.K_max);
        q = (c.r - K) / c.a;
    }
    if (q < box.epsilon - 1e-12 || q > box.q_max + 1e-12) return std::nullopt;
    TradeTriple out{q, K, box.delta_max};
    return out;
}

// Largest (buyer) or smallest (seller) acceptable fee at fixed (K, delta),
// by bisection on the membership test; acceptance is monotone in q because
// the participant's payments are pointwise monotone in the fee.
inline std::optional<double> boundary_fee(const ParticipantBid& bid, double K, double delta) {
    const auto& box = bid.acceptability.box;
    auto ok = [&](double q) { return bid.acceptability.contains({q, K, delta}); };
    const bool buyer = bid.side == Side::buyer;
    const double near = buyer ? box.epsilon : box.q_max;  // most acceptable end
    const double far = buyer ? box.q_max : box.epsilon;
    if (ok(far)) return far;
    if (!ok(near)) return std::nullopt;
    double a = near;
    double b = far;
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (a + b);
        (ok(mid) ? a : b) = mid;
    }
    return a;
}

struct VolumePlan {
    std::map<std::string, double> volumes;  // id -> delta (buyers and sellers)
    bool feasible = false;
};

// Buyers take their full allowable volume (scaled down if sellers cannot
// absorb it); seller volumes follow the alpha split when configured, else a
// greedy fill in descending expected net collection order.
inline VolumePlan plan_volumes(const ClearingProblem& problem,
                               const std::map<std::string, ClearedTrade>& tentative) {
    VolumePlan plan;
    StableSum buy_cap_sum;
    std::vector<const ParticipantBid*> buyers, sellers;
    for (const auto& b : problem.bids) {
        if (!tentative.count(b.id)) continue;
        (b.side == Side::buyer ? buyers : sellers).push_back(&b);
        if (b.side == Side::buyer) buy_cap_sum.add(b.acceptability.box.delta_max);
    }
    if (buyers.empty() || sellers.empty()) return plan;

    double sell_cap = 0.0;
    if (!problem.alpha_split.empty()) {
        StableSum present;
        for (const auto* g : sellers) {
            const auto it = problem.alpha_split.find(g->id);
            if (it != problem.alpha_split.end()) present.add(it->second);
        }
        // Every configured fraction must be backed by a live seller trade,
        // otherwise the split cannot absorb the buyer volume.
        if (std::abs(present.value() - 1.0) > 1e-12) return plan;
        sell_cap = kUnbounded;
        for (const auto* g : sellers) {
            const auto it = problem.alpha_split.find(g->id);
            const double frac = it == problem.alpha_split.end() ? 0.0 : it->second;
            if (frac > 0.0) {
                sell_cap = std::min(sell_cap, g->acceptability.box.delta_max / frac);
            }
        }
    } else {
        StableSum caps;
        for (const auto* g : sellers) caps.add(g->acceptability.box.delta_max);
        sell_cap = caps.value();
    }

    const double buy_cap = buy_cap_sum.value();
    const double volume = std::min(buy_cap, sell_cap);
    if (!(volume > 0.0)) return plan;

    const double scale = volume / buy_cap;
    for (const auto* r : buyers) {
        const double v = r->acceptability.box.delta_max * scale;
        if (v < r->acceptability.box.epsilon - 1e-15) return plan;  // below allowable volume
        plan.volumes[r->id] = v;
    }

    if (!problem.alpha_split.empty()) {
        for (const auto* g : sellers) {
            const auto it = problem.alpha_split.find(g->id);
            const double frac = it == problem.alpha_split.end() ? 0.0 : it->second;
            const double v = frac * volume;
            if (v > 0.0 && v < g->acceptability.box.epsilon - 1e-15) return plan;
            if (v > 0.0) plan.volumes[g->id] = v;
        }
    } else {
        // Greedy: sellers ranked by expected per-unit net collection.
        std::vector<std::pair<double, const ParticipantBid*>> ranked;
        for (const auto* g : sellers) {
            const double K = tentative.at(g->id).trade.K;
            const double q = tentative.at(g->id).trade.q;
            ranked.push_back({expected_payout(problem.spot, problem.scenarios, K) - q, g});
        }
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second->id < b.second->id;
        });
        double remaining = volume;
        for (const auto& [score, g] : ranked) {
            if (remaining <= 0.0) break;
            const double take = std::min(remaining, g->acceptability.box.delta_max);
            if (take < g->acceptability.box.epsilon - 1e-15) return plan;
            plan.volumes[g->id] = take;
            remaining -= take;
        }
        if (remaining > 1e-12) return plan;
    }
    plan.feasible = true;
    return plan;
}

inline double evaluate_expected_ms(const ClearingProblem& problem,
                                   const std::map<std::string, ClearedTrade>& trades) {
    ClearingSolution probe;
    probe.trades = trades;
    probe.alpha_split = problem.alpha_split;
    StableSum acc;
    for (std::size_t i = 0; i < problem.spot.size(); ++i) {
        acc.add(problem.scenarios.points[i].weight * ms_at(probe, problem.spot[i]));
    }
    return acc.value();
}

// All bids carry a single-line closed form: put every participant on its
// own acceptability boundary at the point nearest its box center. This is
// exact for the two-level-spot risk-neutral case, where any boundary choice
// attains the optimum E[MS] = 0 and M is indifferent within the continuum.
inline std::optional<std::map<std::string, ClearedTrade>> analytic_trades(
    const ClearingProblem& problem) {
    std::map<std::string, ClearedTrade> trades;
    for (const auto& b : problem.bids) {
        const auto point = project_center_to_boundary(b.acceptability);
        if (!point) return std::nullopt;
        trades[b.id] = {b.side, *point};
    }
    const auto plan = plan_volumes(problem, trades);
    if (!plan.feasible) return std::map<std::string, ClearedTrade>{};  // empty clearing
    for (auto it = trades.begin(); it != trades.end();) {
        const auto vol = plan.volumes.find(it->first);
        if (vol == plan.volumes.end()) {
            it = trades.erase(it);
        } else {
            it->second.trade.delta = vol->second;
            ++it;
        }
    }
    return trades;
}

// Best-effort finite search used for membership-oracle bids: strikes are
// tried over the distinct spot values plus box endpoints (strikes only act
// through comparisons with realized spot), fees are pushed to acceptability
// boundaries, volumes planned as above, and the best expected MS wins.
// Cartesian over participants up to 6, coordinate descent beyond.
inline std::map<std::string, ClearedTrade> search_trades(const ClearingProblem& problem) {
    std::vector<std::vector<double>> candidates(problem.bids.size());
    for (std::size_t i = 0; i < problem.bids.size(); ++i) {
        const auto& box = problem.bids[i].acceptability.box;
        std::vector<double> ks{box.epsilon, box.K_max};
        for (double p : problem.spot) {
            ks.push_back(std::clamp(p, box.epsilon, box.K_max));
        }
        std::sort(ks.begin(), ks.end());
        ks.erase(std::unique(ks.begin(), ks.end(),
                             [](double a, double b) { return std::abs(a - b) < 1e-15; }),
                 ks.end());
        candidates[i] = ks;
    }

    auto build = [&](const std::vector<std::size_t>& choice)
        -> std::optional<std::map<std::string, ClearedTrade>> {
        std::map<std::string, ClearedTrade> trades;
        for (std::size_t i = 0; i < problem.bids.size(); ++i) {
            const auto& bid = problem.bids[i];
            const double K = candidates[i][choice[i]];
            const double probe_delta = bid.acceptability.box.delta_max;
            const auto q = boundary_fee(bid, K, probe_delta);
            if (!q) continue;  // no acceptable fee at this strike; exclude
            trades[bid.id] = {bid.side, TradeTriple{*q, K, probe_delta}};
        }
        const auto plan = plan_volumes(problem, trades);
        if (!plan.feasible) return std::nullopt;
        for (auto it = trades.begin(); it != trades.end();) {
            const auto vol = plan.volumes.find(it->first);
            if (vol == plan.volumes.end()) {
                it = trades.erase(it);
                continue;
            }
            it->second.trade.delta = vol->second;
            ++it;
        }
        // Re-probe fees at the planned volumes so membership holds at the
        // exact cleared triple (relevant for volume-sensitive oracles).
        for (auto& [id, ct] : trades) {
            for (const auto& bid : problem.bids) {
                if (bid.id != id) continue;
                const auto q = boundary_fee(bid, ct.trade.K, ct.trade.delta);
                if (!q) return std::nullopt;
                ct.trade.q = *q;
            }
        }
        return trades;
    };

    std::map<std::string, ClearedTrade> best;
    double best_ms = 0.0;  // the empty clearing scores zero
    double best_volume = 0.0;
    bool have = false;
    auto consider = [&](const std::vector<std::size_t>& choice) -> double {
        const auto trades = build(choice);
        if (!trades || trades->empty()) return -kUnbounded;
        const double value = evaluate_expected_ms(problem, *trades);
        StableSum vol;
        for (const auto& [id, ct] : *trades) {
            if (ct.side == Side::buyer) vol.add(ct.trade.delta);
        }
        const bool better = value > best_ms + 1e-12 ||
                            (value > best_ms - 1e-12 &&
                             (!have || vol.value() > best_volume + 1e-12));
        if (better) {
            best = *trades;
            best_ms = std::max(value, best_ms);
            best_volume = vol.value();
            have = true;
        }
        return value;
    };

    if (problem.bids.size() <= 6) {
        std::vector<std::size_t> choice(problem.bids.size(), 0);
        while (true) {
            consider(choice);
            std::size_t i = 0;
            while (i < choice.size() && ++choice[i] == candidates[i].size()) {
                choice[i] = 0;
                ++i;
            }
            if (i == choice.size()) break;
        }
    } else {
        std::vector<std::size_t> choice(problem.bids.size(), 0);
        for (int sweep = 0; sweep < 2; ++sweep) {
            for (std::size_t i = 0; i < choice.size(); ++i) {
                std::size_t arg = choice[i];
                double arg_value = -kUnbounded;
                for (std::size_t j = 0; j < candidates[i].size(); ++j) {
                    choice[i] = j;
                    const double value = consider(choice);
                    if (value > arg_value) {
                        arg_value = value;
                        arg = j;
                    }
                }
                choice[i] = arg;
            }
        }
    }
    if (!have || best_ms < -1e-9) return {};
    return best;
}

}  // namespace detail

/// Fixed point of the zero-surplus iteration on the stylized two-level
/// instance: with both sides held on the boundary K_i = 1/rho - 2 q_i and
/// full volume, MS is (q_P - q_W) * cap on the in-the-money branch and its
/// negation otherwise. The Jacobian of that affine system is singular
/// (rank 1), so the update is the least-norm Newton step, which projects
/// (q_W, q_P) onto their mean; convergence is immediate and exact.
struct NewtonResult {
    double q_w = 0.0;
    double q_p = 0.0;
    int iterations = 0;
    double residual = 0.0;
};

inline NewtonResult newton_zero_ms(double mu, double sigma, double rho, double init_q_w,
                                   double init_q_p) {
    if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("newton: rho must lie in (0, 1]");
    const UniformScenarioModel model{mu, sigma};
    model.validate();
    const double cap = delta_cap(model);
    const double eps = 1e-9;
    const double q_hi = (1.0 / rho - eps) / 2.0;
    for (double q : {init_q_w, init_q_p}) {
        if (!(q >= eps && q <= q_hi)) {
            throw ConfigError("newton: init fees must lie in [eps, (1/rho - eps)/2]");
        }
    }
    double q_w = init_q_w;
    double q_p = init_q_p;
    for (int it = 1; it <= 100; ++it) {
        const double f_low = (q_p - q_w) * cap;   // MS on the in-the-money branch
        const double f_high = (q_w - q_p) * cap;  // MS on the out-of-the-money branch
        const double residual = std::max(std::abs(f_low), std::abs(f_high));
        if (residual < 1e-10) {
            return {q_w, q_p, it, residual};
        }
        const double mean = 0.5 * (q_w + q_p);  // least-norm step of the singular system
        q_w = mean;
        q_p = mean;
    }
    throw NumericalError("newton: no convergence in 100 iterations; residual " +
                         std::to_string(std::abs(q_p - q_w) * cap));
}

/// Clears the option market. max-ms maximizes E[MS]; trades are exact for
/// risk-neutral two-level bids (every participant lands on its boundary
/// line 2q + K = 1/rho with full volume) and best-effort otherwise. zero-ms
/// additionally equalizes the two fees so MS vanishes scenario-wise;
/// it requires boundary-line (closed-form) bids.
inline ClearingSolution clear(const ClearingProblem& problem) {
    problem.validate();

    if (problem.objective == ClearingObjective::zero_ms) {
        auto boundary = detail::analytic_trades(problem);
        if (!boundary || boundary->empty()) {
            throw NumericalError(
                "clearing: zero-ms mode needs boundary-line acceptability on every bid");
        }
        // Equalize all fees at their mean and keep every trade on its line.
        StableSum fee_sum;
        for (const auto& [id, ct] : *boundary) fee_sum.add(ct.trade.q);
        const double q = fee_sum.value() / static_cast<double>(boundary->size());
        for (auto& [id, ct] : *boundary) {
            const auto& c = [&]() -> const LinearConstraint& {
                for (const auto& b : problem.bids) {
                    if (b.id == id) return b.acceptability.constraints.front();
                }
                throw NumericalError("clearing: bid lookup failed");
            }();
            ct.trade.q = q;
            ct.trade.K = c.r - c.a * q;
        }
        auto sol = detail::finalize_solution(problem, std::move(*boundary));
        detail::assert_solution(problem, sol);
        return sol;
    }

    auto trades = detail::analytic_trades(problem);
    if (!trades) {
        trades = detail::search_trades(problem);
    }
    auto sol = detail::finalize_solution(problem, std::move(*trades));
    detail::assert_solution(problem, sol);
    return sol;
}

/// Closed-form solution of the stylized single-buyer/single-seller instance
/// for chosen fees: strikes on the boundary K_i = 1/rho - 2 q_i, full
/// volume, exercise on the in-the-money branch, and per-scenario surplus
/// (q_P - q_W) * cap below the mean and its negation above.
inline ClearingSolution clear_example_analytic(double mu, double sigma, double rho, double q_w,
                                               double q_p, std::size_t n_scenarios = 2000) {
    if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("clearing: rho must lie in (0, 1]");
    const UniformScenarioModel model{mu, sigma};
    model.validate();
    for (double q : {q_w, q_p}) {
        if (!(q > 0.0 && q < 1.0 / (2.0 * rho))) {
            throw ConfigError("clearing: fees must lie in (0, 1/(2 rho))");
        }
    }
    if (n_scenarios < 2 || n_scenarios % 2 != 0) {
        throw ConfigError("clearing: scenario count must be even (balanced spot branches)");
    }
    ClearingProblem problem;
    problem.scenarios = discretize(model, n_scenarios);
    problem.spot.reserve(n_scenarios);
    for (const auto& pt : problem.scenarios.points) {
        problem.spot.push_back(spot_price_example(pt.omega, mu, rho));
    }
    const double cap = delta_cap(model);
    std::map<std::string, ClearedTrade> trades;
    trades["W"] = {Side::buyer, TradeTriple{q_w, 1.0 / rho - 2.0 * q_w, cap}};
    trades["P"] = {Side::seller, TradeTriple{q_p, 1.0 / rho - 2.0 * q_p, cap}};
    return detail::finalize_solution(problem, std::move(trades));
}

}  // namespace optmkt
