// Distributional analytics over scenario sets: per-scenario payment panels
// produced by running the actual dispatch and settlement machinery (never
// closed forms), weighted moments, the variance decomposition
// var(pi+V) - var(pi) = 2cov(pi,V) + var(V), and loss probabilities.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "optmkt/bilateral.hpp"
#include "optmkt/clearing.hpp"
#include "optmkt/common.hpp"
#include "optmkt/dispatch.hpp"
#include "optmkt/scenario.hpp"

namespace optmkt {

/// Aligned per-scenario payment traces for a set of participants, all over
/// one scenario set. samples[id][i] is the total payment in scenario i.
struct PaymentPanel {
    ScenarioSet scenarios;
    std::vector<double> spot;  // real-time price per scenario
    std::map<std::string, std::vector<double>> samples;
};

/// A single bilateral option trade layered on the energy market.
struct BilateralOverlay {
    std::string buyer_id;
    std::string seller_id;
    TradeTriple trade;
};

/// Energy-market payments per scenario: day-ahead once, then re-dispatch and
/// settle every scenario. Includes the consumer row.
inline PaymentPanel simulate_payments(const MarketInstance& instance,
                                      const ScenarioSet& scenarios) {
    scenarios.validate(&instance.model);
    PaymentPanel panel;
    panel.scenarios = scenarios;
    panel.spot.reserve(scenarios.size());
    const auto forward = day_ahead(instance);
    std::vector<std::string> ids;
    for (const auto& g : instance.dispatchables) ids.push_back(g.id);
    for (const auto& r : instance.renewables) ids.push_back(r.id);
    ids.push_back(consumer_id());
    for (const auto& id : ids) {
        panel.samples[id].reserve(scenarios.size());
    }
    for (const auto& pt : scenarios.points) {
        const auto rt = real_time(instance, forward, pt.omega);
        panel.spot.push_back(rt.price);
        for (const auto& rec : payments(instance, forward, rt)) {
            panel.samples[rec.id].push_back(rec.total);
        }
    }
    return panel;
}

/// Energy payments plus one bilateral option trade: the buyer and seller
/// rows become total payments including the option cashflows.
inline PaymentPanel simulate_payments(const MarketInstance& instance,
                                      const ScenarioSet& scenarios,
                                      const BilateralOverlay& overlay) {
    PaymentPanel panel = simulate_payments(instance, scenarios);
    auto buyer = panel.samples.find(overlay.buyer_id);
    auto seller = panel.samples.find(overlay.seller_id);
    if (buyer == panel.samples.end() || seller == panel.samples.end()) {
        throw ConfigError("simulate: overlay names unknown participants");
    }
    for (std::size_t i = 0; i < panel.spot.size(); ++i) {
        const auto flows = option_cashflows(panel.spot[i], overlay.trade);
        buyer->second[i] += flows.buyer_flow;
        seller->second[i] += flows.seller_flow;
    }
    return panel;
}

/// Energy payments plus a cleared option book: every participant with a
/// cleared trade gets its option flows added (sellers at the allocated
/// exercise), and the market maker appears as a row holding MS per scenario.
inline PaymentPanel simulate_payments(const MarketInstance& instance,
                                      const ScenarioSet& scenarios,
                                      const ClearingSolution& solution) {
    PaymentPanel panel = simulate_payments(instance, scenarios);
    if (solution.empty()) return panel;
    auto& maker = panel.samples[market_maker_id()];
    maker.assign(scenarios.size(), 0.0);
    for (std::size_t i = 0; i < panel.spot.size(); ++i) {
        const double p = panel.spot[i];
        const auto allocation = exercise_allocation(solution, p);
        for (const auto& [id, ct] : solution.trades) {
            const auto row = panel.samples.find(id);
            if (row == panel.samples.end()) {
                throw ConfigError("simulate: cleared participant '" + id +
                                  "' is not in the market instance");
            }
            const double fee = ct.trade.q * ct.trade.delta;
            const double payout = pos(p - ct.trade.K);
            if (ct.side == Side::buyer) {
                row->second[i] += -fee + payout * ct.trade.delta;
            } else {
                row->second[i] += fee - payout * allocation.at(id);
            }
        }
        maker[i] = ms_at(solution, p, allocation);
    }
    return panel;
}

struct Moments {
    std::vector<std::string> ids;
    std::vector<double> mean;
    std::vector<std::vector<double>> cov;  // variances on the diagonal
};

/// Weighted population moments (weights are exact probabilities, so no
/// sample-size correction). Two-pass, sequential compensated accumulation.
inline Moments moments(const PaymentPanel& panel) {
    Moments m;
    for (const auto& [id, values] : panel.samples) {
        if (values.size() != panel.scenarios.size()) {
            throw ConfigError("moments: sample not aligned with the scenario set");
        }
        m.ids.push_back(id);
    }
    const std::size_t k = m.ids.size();
    m.mean.resize(k);
    for (std::size_t a = 0; a < k; ++a) {
        StableSum acc;
        const auto& v = panel.samples.at(m.ids[a]);
        for (std::size_t i = 0; i < v.size(); ++i) {
            acc.add(panel.scenarios.points[i].weight * v[i]);
        }
        m.mean[a] = acc.value();
    }
    m.cov.assign(k, std::vector<double>(k, 0.0));
    for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = a; b < k; ++b) {
            StableSum acc;
            const auto& va = panel.samples.at(m.ids[a]);
            const auto& vb = panel.samples.at(m.ids[b]);
            for (std::size_t i = 0; i < va.size(); ++i) {
                acc.add(panel.scenarios.points[i].weight * (va[i] - m.mean[a]) *
                        (vb[i] - m.mean[b]));
            }
            m.cov[a][b] = m.cov[b][a] = acc.value();
        }
    }
    return m;
}

inline double mean_of(const PaymentPanel& panel, const std::string& id) {
    StableSum acc;
    const auto& v = panel.samples.at(id);
    for (std::size_t i = 0; i < v.size(); ++i) {
        acc.add(panel.scenarios.points[i].weight * v[i]);
    }
    return acc.value();
}

inline double variance_of(const PaymentPanel& panel, const std::string& id) {
    const double m = mean_of(panel, id);
    StableSum acc;
    const auto& v = panel.samples.at(id);
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double d = v[i] - m;
        acc.add(panel.scenarios.points[i].weight * d * d);
    }
    return acc.value();
}

inline double covariance_of(const PaymentPanel& panel, const std::string& id_a,
                            const std::string& id_b) {
    const double ma = mean_of(panel, id_a);
    const double mb = mean_of(panel, id_b);
    StableSum acc;
    const auto& va = panel.samples.at(id_a);
    const auto& vb = panel.samples.at(id_b);
    for (std::size_t i = 0; i < va.size(); ++i) {
        acc.add(panel.scenarios.points[i].weight * (va[i] - ma) * (vb[i] - mb));
    }
    return acc.value();
}

struct VarianceDecomposition {
    double two_cov = 0.0;  // 2 cov(pi, V)
    double var_v = 0.0;    // var(V)
    double total = 0.0;    // their sum = var(pi+V) - var(pi)
};

/// Splits the variance change caused by adding an aligned flow V to a base
/// payment pi into its covariance and own-variance parts.
inline VarianceDecomposition variance_decomposition(const ScenarioSet& scenarios,
                                                    const std::vector<double>& pi,
                                                    const std::vector<double>& v) {
    if (pi.size() != scenarios.size() || v.size() != scenarios.size()) {
        throw ConfigError("variance decomposition: samples must align with the scenario set");
    }
    PaymentPanel panel;
    panel.scenarios = scenarios;
    panel.samples["pi"] = pi;
    panel.samples["v"] = v;
    const double c = covariance_of(panel, "pi", "v");
    const double vv = variance_of(panel, "v");
    return {2.0 * c, vv, 2.0 * c + vv};
}

/// Probability mass of scenarios with a strictly negative payment.
inline double loss_probability(const ScenarioSet& scenarios, const std::vector<double>& payments) {
    if (payments.size() != scenarios.size()) {
        throw ConfigError("loss probability: sample must align with the scenario set");
    }
    StableSum acc;
    for (std::size_t i = 0; i < payments.size(); ++i) {
        if (payments[i] < 0.0) acc.add(scenarios.points[i].weight);
    }
    return acc.value();
}

}  // namespace optmkt
