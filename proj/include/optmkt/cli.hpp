// Command-line front end. Five subcommands (dispatch, bilateral, clear,
// risk-boundary, simulate) share one JSON config and write deterministic CSV
// artifacts with a metadata comment header. Everything here is a thin
// orchestration layer over the library; tests call run() in-process.

#pragma once

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "optmkt/analytics.hpp"
#include "optmkt/bilateral.hpp"
#include "optmkt/clearing.hpp"
#include "optmkt/common.hpp"
#include "optmkt/config.hpp"
#include "optmkt/csv.hpp"
#include "optmkt/dispatch.hpp"
#include "optmkt/risk.hpp"
#include "optmkt/scenario.hpp"

namespace optmkt::cli {

namespace detail {

inline std::string out_path(const ExperimentConfig& cfg, const std::string& name) {
    std::filesystem::create_directories(cfg.run.output_dir);
    return (std::filesystem::path(cfg.run.output_dir) / name).string();
}

inline RunMetadata metadata(const ExperimentConfig& cfg) {
    RunMetadata meta;
    meta.config_hash = cfg.hash;
    return meta;
}

inline std::string fmt(double v) { return format_number(v); }

/// Scenario grid used by the deterministic commands.
inline ScenarioSet quadrature(const ExperimentConfig& cfg) {
    return discretize(cfg.market.model, cfg.run.scenarios);
}

inline double risk_delta_cap(const ExperimentConfig& cfg) {
    if (cfg.risk.delta_cap) return *cfg.risk.delta_cap;
    return 0.4 * delta_cap(cfg.market.model);
}

inline std::vector<double> k_grid_points(const KGridConfig& grid) {
    std::vector<double> ks;
    if (grid.n == 1) {
        ks.push_back(grid.lo);
        return ks;
    }
    const double step = (grid.hi - grid.lo) / static_cast<double>(grid.n - 1);
    for (std::size_t i = 0; i < grid.n; ++i) {
        ks.push_back(grid.lo + static_cast<double>(i) * step);
    }
    return ks;
}

inline ClearingProblem build_clearing_problem(const ExperimentConfig& cfg,
                                              const PaymentPanel& panel,
                                              ClearingObjective objective) {
    if (cfg.option.mode != OptionMode::centralized) {
        throw ConfigError("clear: option.mode must be \"centralized\"");
    }
    if (!cfg.option.box) throw ConfigError("clear: option.box is required");
    if (cfg.option.bids.empty()) throw ConfigError("clear: option.bids is required");
    ClearingProblem prob;
    prob.scenarios = panel.scenarios;
    prob.spot = panel.spot;
    prob.objective = objective;
    prob.alpha_split = cfg.option.alpha_split;
    for (const BidConfig& bid : cfg.option.bids) {
        const auto it = panel.samples.find(bid.id);
        if (it == panel.samples.end()) {
            throw ConfigError("clear: bid id '" + bid.id + "' is not a market participant");
        }
        prob.bids.push_back({bid.id, bid.side,
                             risk_neutral_acceptability(bid.side, it->second, panel.spot,
                                                        panel.scenarios, *cfg.option.box)});
    }
    prob.validate();
    return prob;
}

inline void write_payments_csv(const ExperimentConfig& cfg, const PaymentPanel& panel,
                               const RunMetadata& meta) {
    CsvWriter csv(out_path(cfg, "payments.csv"), meta);
    csv.row({"scenario", "weight", "participant", "payment"});
    for (const auto& [id, series] : panel.samples) {
        for (std::size_t s = 0; s < series.size(); ++s) {
            csv.row({fmt(panel.scenarios.points[s].omega),
                     fmt(panel.scenarios.points[s].weight), id, fmt(series[s])});
        }
    }
}

inline void write_moments_csv(const ExperimentConfig& cfg, const PaymentPanel& panel,
                              const RunMetadata& meta) {
    const Moments m = moments(panel);
    CsvWriter csv(out_path(cfg, "moments.csv"), meta);
    csv.row({"participant_a", "participant_b", "mean_a", "covariance"});
    for (std::size_t i = 0; i < m.ids.size(); ++i) {
        for (std::size_t j = i; j < m.ids.size(); ++j) {
            csv.row({m.ids[i], m.ids[j], fmt(m.mean[i]), fmt(m.cov[i][j])});
        }
    }
}

inline int cmd_dispatch(const std::string& config_path, const std::optional<double>& omega) {
    const ExperimentConfig cfg = load_config(config_path);
    const RunMetadata meta = metadata(cfg);
    const ForwardResult fwd = day_ahead(cfg.market);
    {
        CsvWriter csv(out_path(cfg, "forward.csv"), meta);
        csv.row({"id", "X", "P_star"});
        for (const auto& [id, x] : fwd.quantities) {
            csv.row({id, fmt(x), fmt(fwd.price)});
        }
    }
    std::cout << "day-ahead price: " << fmt(fwd.price) << "\n";
    if (omega) {
        const RealTimeResult rt = real_time(cfg.market, fwd, *omega);
        const std::vector<PaymentRecord> pays = payments(cfg.market, fwd, rt);
        std::map<std::string, double> totals;
        for (const PaymentRecord& rec : pays) totals[rec.id] = rec.total;
        CsvWriter csv(out_path(cfg, "realtime.csv"), meta);
        csv.row({"id", "x", "p", "payment"});
        for (const auto& [id, x] : rt.quantities) {
            csv.row({id, fmt(x), fmt(rt.price), fmt(totals.at(id))});
        }
        csv.row({consumer_id(), fmt(cfg.market.demand), fmt(rt.price),
                 fmt(totals.at(consumer_id()))});
        std::cout << "real-time price at omega=" << fmt(*omega) << ": " << fmt(rt.price)
                  << "\n";
    }
    return 0;
}

inline int cmd_bilateral(const std::string& config_path, double q, double K,
                         const std::optional<double>& delta) {
    const ExperimentConfig cfg = load_config(config_path);
    if (cfg.option.mode != OptionMode::bilateral) {
        throw ConfigError("bilateral: option.mode must be \"bilateral\"");
    }
    const UniformScenarioModel& model = cfg.market.model;
    const double rho = cfg.option.rho;

    const BestResponseSet br = best_response(q, K, model, rho);
    const EquilibriumClass cls = classify_equilibrium(q, K, rho);
    const TradeTriple trade{q, K, delta ? *delta : br.canonical()};
    const double ev_buyer = expected_buyer_option_payoff(model, rho, trade);

    std::cout << "best response: " << (br.kind == ResponseKind::zero ? "{0}"
                                       : br.kind == ResponseKind::full
                                           ? "{" + fmt(br.hi) + "}"
                                           : "[" + fmt(br.lo) + ", " + fmt(br.hi) + "]")
              << "\n";
    std::cout << "equilibrium class: " << to_string(cls) << "\n";
    std::cout << "expected buyer option payoff: " << fmt(ev_buyer) << "\n";

    const ScenarioSet scen = detail::quadrature(cfg);
    const PaymentPanel base = simulate_payments(cfg.market, scen);
    const BilateralOverlay overlay{cfg.option.bilateral.buyer, cfg.option.bilateral.seller,
                                   trade};
    const PaymentPanel with = simulate_payments(cfg.market, scen, overlay);
    const double d_buyer = variance_of(with, overlay.buyer_id) - variance_of(base, overlay.buyer_id);
    const double d_seller =
        variance_of(with, overlay.seller_id) - variance_of(base, overlay.seller_id);
    std::cout << "variance delta (boundary closed form): "
              << fmt(variance_delta_analytic(q, K, model.sigma)) << "\n";
    std::cout << "variance delta (simulated, buyer " << overlay.buyer_id
              << "): " << fmt(d_buyer) << "\n";
    std::cout << "variance delta (simulated, seller " << overlay.seller_id
              << "): " << fmt(d_seller) << "\n";

    const RunMetadata meta = metadata(cfg);
    CsvWriter csv(out_path(cfg, "bilateral.csv"), meta);
    csv.row({"scenario", "weight", "spot", "buyer_flow", "seller_flow"});
    for (std::size_t s = 0; s < scen.points.size(); ++s) {
        const OptionCashflows flows = option_cashflows(base.spot[s], trade);
        csv.row({fmt(scen.points[s].omega), fmt(scen.points[s].weight),
                 fmt(base.spot[s]), fmt(flows.buyer_flow), fmt(flows.seller_flow)});
    }
    return 0;
}

inline int cmd_clear(const std::string& config_path, const std::string& mode) {
    ClearingObjective objective;
    if (mode == "max-ms") {
        objective = ClearingObjective::max_ms;
    } else if (mode == "zero-ms") {
        objective = ClearingObjective::zero_ms;
    } else {
        throw ConfigError("clear: --mode must be max-ms or zero-ms");
    }
    const ExperimentConfig cfg = load_config(config_path);
    const ScenarioSet scen = detail::quadrature(cfg);
    const PaymentPanel panel = simulate_payments(cfg.market, scen);
    const ClearingProblem prob = build_clearing_problem(cfg, panel, objective);
    const ClearingSolution sol = clear(prob);

    const RunMetadata meta = metadata(cfg);
    {
        CsvWriter csv(out_path(cfg, "trades.csv"), meta);
        csv.row({"id", "side", "q", "K", "delta"});
        if (sol.empty()) {
            csv.row({"none", "none", "0", "0", "0"});
        }
        for (const auto& [id, cleared] : sol.trades) {
            csv.row({id, to_string(cleared.side), fmt(cleared.trade.q), fmt(cleared.trade.K),
                     fmt(cleared.trade.delta)});
            std::cout << id << " " << to_string(cleared.side) << " q=" << fmt(cleared.trade.q)
                      << " K=" << fmt(cleared.trade.K) << " delta=" << fmt(cleared.trade.delta)
                      << "\n";
        }
    }
    {
        CsvWriter csv(out_path(cfg, "exercise.csv"), meta);
        csv.row({"seller", "scenario", "delta_exercised"});
        for (const auto& [seller, series] : sol.exercise) {
            for (std::size_t s = 0; s < series.size(); ++s) {
                csv.row({seller, fmt(scen.points[s].omega), fmt(series[s])});
            }
        }
    }
    {
        CsvWriter csv(out_path(cfg, "ms.csv"), meta);
        csv.row({"scenario", "weight", "ms"});
        for (std::size_t s = 0; s < scen.points.size(); ++s) {
            csv.row({fmt(scen.points[s].omega), fmt(scen.points[s].weight),
                     fmt(sol.ms[s])});
        }
    }
    std::cout << "expected merchandising surplus: " << fmt(expected_ms(sol)) << "\n";
    return 0;
}

inline int cmd_risk_boundary(const std::string& config_path, const std::string& side_name,
                             double alpha, const std::optional<double>& delta_arg) {
    const ExperimentConfig cfg = load_config(config_path);
    Side side;
    if (side_name == "buyer") {
        side = Side::buyer;
    } else if (side_name == "seller") {
        side = Side::seller;
    } else {
        throw ConfigError("risk-boundary: --side must be buyer or seller");
    }
    const double delta = delta_arg ? *delta_arg : risk_delta_cap(cfg);
    if (delta == 0.0) {
        std::cout << "warning: delta=0 gives a degenerate frontier (every fee is acceptable)"
                  << "\n";
    }
    const std::string participant = side == Side::buyer ? cfg.option.bilateral.buyer
                                                        : cfg.option.bilateral.seller;
    const ScenarioSet scen = detail::quadrature(cfg);
    const PaymentPanel panel = simulate_payments(cfg.market, scen);
    const auto it = panel.samples.find(participant);
    if (it == panel.samples.end()) {
        throw ConfigError("risk-boundary: participant '" + participant +
                          "' is not in the market instance");
    }
    double q_hi;
    if (cfg.option.box) {
        q_hi = cfg.option.box->q_max;
    } else if (cfg.option.rho > 0.0 && cfg.option.rho <= 1.0) {
        q_hi = 1.0 / cfg.option.rho;
    } else {
        throw ConfigError("risk-boundary: set option.box.q_max or option.rho for the fee range");
    }
    const std::vector<double> ks = k_grid_points(cfg.risk.k_grid);
    const std::vector<FrontierPoint> frontier = boundary_trace(
        side, RiskLevel(alpha), delta, ks, 1e-9, q_hi, it->second, panel.spot, scen);

    const RunMetadata meta = metadata(cfg);
    CsvWriter csv(out_path(cfg, "frontier.csv"), meta);
    csv.row({"K", "q_boundary", "alpha", "delta"});
    for (const FrontierPoint& pt : frontier) {
        csv.row({fmt(pt.K), pt.bounded ? fmt(pt.q) : "unbounded", fmt(alpha), fmt(delta)});
    }
    return 0;
}

inline int cmd_simulate(const std::string& config_path, const std::optional<std::size_t>& n_arg,
                        const std::optional<std::uint64_t>& seed_arg) {
    const ExperimentConfig cfg = load_config(config_path);
    const std::size_t n = n_arg ? *n_arg : cfg.run.scenarios;
    if (n < 1) throw ConfigError("simulate: scenario count must be >= 1");
    const std::optional<std::uint64_t> seed = seed_arg ? seed_arg : cfg.run.seed;

    const ScenarioSet scen =
        seed ? sample(cfg.market.model, n, *seed) : discretize(cfg.market.model, n);
    RunMetadata meta = metadata(cfg);
    if (seed) meta.set_seed(*seed);

    PaymentPanel panel;
    switch (cfg.option.mode) {
        case OptionMode::none:
            panel = simulate_payments(cfg.market, scen);
            break;
        case OptionMode::bilateral: {
            const BilateralConfig& b = cfg.option.bilateral;
            const TradeTriple trade{b.q, b.K,
                                    b.delta ? *b.delta : delta_cap(cfg.market.model)};
            panel = simulate_payments(cfg.market, scen,
                                      BilateralOverlay{b.buyer, b.seller, trade});
            break;
        }
        case OptionMode::centralized: {
            const PaymentPanel base = simulate_payments(cfg.market, scen);
            const ClearingProblem prob =
                build_clearing_problem(cfg, base, ClearingObjective::max_ms);
            panel = simulate_payments(cfg.market, scen, clear(prob));
            break;
        }
    }
    write_payments_csv(cfg, panel, meta);
    write_moments_csv(cfg, panel, meta);
    std::cout << "simulated " << n << " scenarios ("
              << (seed ? "seed " + std::to_string(*seed) : "quadrature") << ")\n";
    return 0;
}

}  // namespace detail

/// Entry point shared by the binary and the in-process test harness.
/// argv[0] is the program name, as in main().
inline int run(int argc, const char* const* argv) {
    CLI::App app{"Two-settlement electricity market and option-market simulator"};
    app.require_subcommand(1);

    std::string config_path;
    double omega = 0.0, q = 0.0, K = 0.0, delta = 0.0, alpha = 0.0;
    std::string mode, side;
    std::uint64_t seed = 0;
    std::size_t n = 0;

    CLI::App* c_dispatch = app.add_subcommand("dispatch", "Day-ahead and real-time dispatch");
    c_dispatch->add_option("--config", config_path, "Experiment config (JSON)")->required();
    CLI::Option* o_omega = c_dispatch->add_option("--omega", omega, "Realized availability");

    CLI::App* c_bilateral =
        app.add_subcommand("bilateral", "Bilateral option trade analysis");
    c_bilateral->add_option("--config", config_path, "Experiment config (JSON)")->required();
    c_bilateral->add_option("--q", q, "Option fee per unit")->required();
    c_bilateral->add_option("--K", K, "Strike price")->required();
    CLI::Option* o_delta_b = c_bilateral->add_option("--delta", delta, "Trade volume");

    CLI::App* c_clear = app.add_subcommand("clear", "Centralized option-market clearing");
    c_clear->add_option("--config", config_path, "Experiment config (JSON)")->required();
    c_clear->add_option("--mode", mode, "Objective: max-ms or zero-ms")->required();

    CLI::App* c_risk = app.add_subcommand("risk-boundary", "CVaR acceptability frontier");
    c_risk->add_option("--config", config_path, "Experiment config (JSON)")->required();
    c_risk->add_option("--side", side, "buyer or seller")->required();
    c_risk->add_option("--alpha", alpha, "CVaR level in [0, 1)")->required();
    CLI::Option* o_delta_r = c_risk->add_option("--delta", delta, "Trade volume");

    CLI::App* c_sim = app.add_subcommand("simulate", "Payment panel and moments");
    c_sim->add_option("--config", config_path, "Experiment config (JSON)")->required();
    CLI::Option* o_n = c_sim->add_option("--n", n, "Scenario count");
    CLI::Option* o_seed = c_sim->add_option("--seed", seed, "Monte Carlo seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand(c_dispatch)) {
            return detail::cmd_dispatch(
                config_path, o_omega->count() ? std::optional<double>(omega) : std::nullopt);
        }
        if (app.got_subcommand(c_bilateral)) {
            return detail::cmd_bilateral(
                config_path, q, K,
                o_delta_b->count() ? std::optional<double>(delta) : std::nullopt);
        }
        if (app.got_subcommand(c_clear)) {
            return detail::cmd_clear(config_path, mode);
        }
        if (app.got_subcommand(c_risk)) {
            return detail::cmd_risk_boundary(
                config_path, side, alpha,
                o_delta_r->count() ? std::optional<double>(delta) : std::nullopt);
        }
        if (app.got_subcommand(c_sim)) {
            return detail::cmd_simulate(
                config_path, o_n->count() ? std::optional<std::size_t>(n) : std::nullopt,
                o_seed->count() ? std::optional<std::uint64_t>(seed) : std::nullopt);
        }
        throw ConfigError("no subcommand given");
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const InfeasibleError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}

inline int run(const std::vector<std::string>& args) {
    std::vector<std::string> storage;
    storage.reserve(args.size() + 1);
    storage.emplace_back("optmkt");
    for (const std::string& a : args) storage.push_back(a);
    std::vector<const char*> argv;
    argv.reserve(storage.size());
    for (const std::string& s : storage) argv.push_back(s.c_str());
    return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace optmkt::cli
