// Experiment configuration: one JSON document covering the market instance,
// the option-market layer, risk sweeps, and run parameters. Parsing is
// strict: unknown keys are rejected with their full path, nulls mean
// "unbounded" (capacities, ramps) or "use the default" (volumes, seeds).

#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "optmkt/bilateral.hpp"
#include "optmkt/clearing.hpp"
#include "optmkt/common.hpp"
#include "optmkt/csv.hpp"
#include "optmkt/dispatch.hpp"

namespace optmkt {

enum class OptionMode { none, bilateral, centralized };

struct BilateralConfig {
    std::string buyer = "W";
    std::string seller = "P";
    double q = 0.0;
    double K = 0.0;
    std::optional<double> delta;  // absent: the volume cap sqrt(3)*sigma
};

struct BidConfig {
    std::string id;
    Side side = Side::buyer;
};

struct OptionSection {
    OptionMode mode = OptionMode::none;
    double rho = 0.0;  // spot-level parameter: the in-the-money price is 1/rho
    BilateralConfig bilateral;
    std::optional<AllowableBox> box;
    std::vector<BidConfig> bids;
    std::map<std::string, double> alpha_split;
};

struct KGridConfig {
    double lo = 0.1;
    double hi = 1.9;
    std::size_t n = 19;
};

struct RiskSection {
    std::vector<double> alphas{0.0};
    std::optional<double> delta_cap;  // absent: (2 sqrt(3)/5) * sigma
    KGridConfig k_grid;
};

struct RunSection {
    std::size_t scenarios = 2000;
    std::optional<std::uint64_t> seed;
    std::string output_dir = "out";
};

struct ExperimentConfig {
    MarketInstance market{0.0, {}, {}, UniformScenarioModel{}};
    OptionSection option;
    RiskSection risk;
    RunSection run;
    std::uint64_t hash = 0;  // FNV-1a of the canonical JSON dump
};

namespace detail {

using nlohmann::json;

inline void check_keys(const json& obj, const std::string& path,
                       std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ConfigError("config: '" + path + "' must be an object");
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* k : allowed) {
            if (item.key() == k) known = true;
        }
        if (!known) {
            throw ConfigError("config: unknown key '" + (path.empty() ? "" : path + ".") +
                              item.key() + "'");
        }
    }
}

inline std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

inline const json* find(const json& obj, const std::string& key) {
    const auto it = obj.find(key);
    return it == obj.end() || it->is_null() ? nullptr : &*it;
}

inline double require_number(const json& obj, const std::string& path, const std::string& key) {
    const json* v = find(obj, key);
    if (!v || !v->is_number()) {
        throw ConfigError("config: '" + join(path, key) + "' must be a number");
    }
    return v->get<double>();
}

inline double number_or(const json& obj, const std::string& path, const std::string& key,
                        double fallback) {
    const json* v = find(obj, key);
    if (!v) return fallback;
    if (!v->is_number()) throw ConfigError("config: '" + join(path, key) + "' must be a number");
    return v->get<double>();
}

/// Number, or null/absent meaning "unbounded".
inline double number_or_unbounded(const json& obj, const std::string& path,
                                  const std::string& key) {
    const json* v = find(obj, key);
    if (!v) return kUnbounded;
    if (!v->is_number()) {
        throw ConfigError("config: '" + join(path, key) + "' must be a number or null");
    }
    return v->get<double>();
}

inline std::string require_string(const json& obj, const std::string& path,
                                  const std::string& key) {
    const json* v = find(obj, key);
    if (!v || !v->is_string()) {
        throw ConfigError("config: '" + join(path, key) + "' must be a string");
    }
    return v->get<std::string>();
}

inline CostCurve parse_cost(const json& obj, const std::string& path) {
    const json* blocks = find(obj, "blocks");
    if (blocks) {
        if (find(obj, "marginal_cost")) {
            throw ConfigError("config: '" + path + "' must not set both marginal_cost and blocks");
        }
        if (!blocks->is_array() || blocks->empty()) {
            throw ConfigError("config: '" + path + ".blocks' must be a nonempty array");
        }
        CostCurve curve;
        for (std::size_t i = 0; i < blocks->size(); ++i) {
            const std::string bpath = path + ".blocks[" + std::to_string(i) + "]";
            check_keys((*blocks)[i], bpath, {"cap_mw", "marginal_cost"});
            curve.blocks.push_back({number_or_unbounded((*blocks)[i], bpath, "cap_mw"),
                                    require_number((*blocks)[i], bpath, "marginal_cost")});
        }
        return curve;
    }
    return CostCurve::flat(require_number(obj, path, "marginal_cost"));
}

inline Side parse_side(const std::string& s, const std::string& path) {
    if (s == "buyer") return Side::buyer;
    if (s == "seller") return Side::seller;
    throw ConfigError("config: '" + path + "' must be \"buyer\" or \"seller\"");
}

inline MarketInstance parse_market(const json& j) {
    check_keys(j, "market",
               {"demand_mw", "mu_mw", "sigma_mw", "dispatchables", "renewables"});
    MarketInstance m{0.0, {}, {},
                     UniformScenarioModel{require_number(j, "market", "mu_mw"),
                                          require_number(j, "market", "sigma_mw")}};
    m.demand = require_number(j, "market", "demand_mw");
    const json* gens = find(j, "dispatchables");
    if (gens) {
        if (!gens->is_array()) throw ConfigError("config: 'market.dispatchables' must be an array");
        for (std::size_t i = 0; i < gens->size(); ++i) {
            const std::string path = "market.dispatchables[" + std::to_string(i) + "]";
            const json& g = (*gens)[i];
            check_keys(g, path, {"id", "cap_mw", "ramp_mw", "marginal_cost", "blocks"});
            DispatchableGen gen;
            gen.id = require_string(g, path, "id");
            gen.cap = number_or_unbounded(g, path, "cap_mw");
            gen.ramp = number_or_unbounded(g, path, "ramp_mw");
            gen.cost = parse_cost(g, path);
            m.dispatchables.push_back(std::move(gen));
        }
    }
    const json* rens = find(j, "renewables");
    if (rens) {
        if (!rens->is_array()) throw ConfigError("config: 'market.renewables' must be an array");
        for (std::size_t i = 0; i < rens->size(); ++i) {
            const std::string path = "market.renewables[" + std::to_string(i) + "]";
            const json& r = (*rens)[i];
            check_keys(r, path, {"id", "cap_mw"});
            RenewableGen ren;
            ren.id = require_string(r, path, "id");
            ren.cap = number_or_unbounded(r, path, "cap_mw");
            m.renewables.push_back(std::move(ren));
        }
    }
    m.validate();
    return m;
}

inline OptionSection parse_option(const json& j, const UniformScenarioModel& model) {
    check_keys(j, "option", {"mode", "rho", "bilateral", "box", "bids", "alpha_split"});
    OptionSection o;
    const std::string mode = require_string(j, "option", "mode");
    if (mode == "none") {
        o.mode = OptionMode::none;
    } else if (mode == "bilateral") {
        o.mode = OptionMode::bilateral;
    } else if (mode == "centralized") {
        o.mode = OptionMode::centralized;
    } else {
        throw ConfigError("config: 'option.mode' must be none, bilateral, or centralized");
    }
    o.rho = number_or(j, "option", "rho", 0.0);
    if (o.mode != OptionMode::none && !(o.rho > 0.0 && o.rho <= 1.0)) {
        throw ConfigError("config: 'option.rho' must lie in (0, 1]");
    }
    if (const json* b = find(j, "bilateral")) {
        check_keys(*b, "option.bilateral", {"buyer", "seller", "q", "K", "delta"});
        o.bilateral.buyer = require_string(*b, "option.bilateral", "buyer");
        o.bilateral.seller = require_string(*b, "option.bilateral", "seller");
        o.bilateral.q = require_number(*b, "option.bilateral", "q");
        o.bilateral.K = require_number(*b, "option.bilateral", "K");
        if (find(*b, "delta")) {
            o.bilateral.delta = require_number(*b, "option.bilateral", "delta");
        }
    }
    if (const json* b = find(j, "box")) {
        check_keys(*b, "option.box", {"q_max", "K_max", "delta_max", "epsilon"});
        AllowableBox box;
        box.q_max = require_number(*b, "option.box", "q_max");
        box.K_max = require_number(*b, "option.box", "K_max");
        const json* dm = find(*b, "delta_max");
        box.delta_max = dm ? require_number(*b, "option.box", "delta_max") : delta_cap(model);
        box.epsilon = number_or(*b, "option.box", "epsilon", 1e-9);
        box.validate();
        o.box = box;
    }
    if (const json* bids = find(j, "bids")) {
        if (!bids->is_array()) throw ConfigError("config: 'option.bids' must be an array");
        for (std::size_t i = 0; i < bids->size(); ++i) {
            const std::string path = "option.bids[" + std::to_string(i) + "]";
            check_keys((*bids)[i], path, {"id", "side"});
            o.bids.push_back({require_string((*bids)[i], path, "id"),
                              parse_side(require_string((*bids)[i], path, "side"), path + ".side")});
        }
    }
    if (const json* split = find(j, "alpha_split")) {
        if (!split->is_object()) {
            throw ConfigError("config: 'option.alpha_split' must be an object");
        }
        for (const auto& item : split->items()) {
            if (!item.value().is_number()) {
                throw ConfigError("config: 'option.alpha_split." + item.key() +
                                  "' must be a number");
            }
            o.alpha_split[item.key()] = item.value().get<double>();
        }
    }
    return o;
}

inline RiskSection parse_risk(const json& j) {
    check_keys(j, "risk", {"alphas", "delta_cap", "k_grid"});
    RiskSection r;
    if (const json* alphas = find(j, "alphas")) {
        if (!alphas->is_array() || alphas->empty()) {
            throw ConfigError("config: 'risk.alphas' must be a nonempty array");
        }
        r.alphas.clear();
        for (const auto& a : *alphas) {
            if (!a.is_number()) throw ConfigError("config: 'risk.alphas' entries must be numbers");
            r.alphas.push_back(a.get<double>());
            RiskLevel check(r.alphas.back());  // range validation
            (void)check;
        }
    }
    if (find(j, "delta_cap")) {
        r.delta_cap = require_number(j, "risk", "delta_cap");
    }
    if (const json* grid = find(j, "k_grid")) {
        check_keys(*grid, "risk.k_grid", {"lo", "hi", "n"});
        r.k_grid.lo = require_number(*grid, "risk.k_grid", "lo");
        r.k_grid.hi = require_number(*grid, "risk.k_grid", "hi");
        const double n = require_number(*grid, "risk.k_grid", "n");
        if (!(r.k_grid.lo < r.k_grid.hi) || !(n >= 1.0)) {
            throw ConfigError("config: 'risk.k_grid' must have lo < hi and n >= 1");
        }
        r.k_grid.n = static_cast<std::size_t>(n);
    }
    return r;
}

inline RunSection parse_run(const json& j) {
    check_keys(j, "run", {"scenarios", "seed", "output_dir"});
    RunSection r;
    const double n = number_or(j, "run", "scenarios", static_cast<double>(r.scenarios));
    if (!(n >= 1.0)) throw ConfigError("config: 'run.scenarios' must be >= 1");
    r.scenarios = static_cast<std::size_t>(n);
    if (const json* seed = find(j, "seed")) {
        if (!seed->is_number_unsigned()) {
            throw ConfigError("config: 'run.seed' must be a nonnegative integer or null");
        }
        r.seed = seed->get<std::uint64_t>();
    }
    if (find(j, "output_dir")) {
        r.output_dir = require_string(j, "run", "output_dir");
    }
    return r;
}

}  // namespace detail

inline ExperimentConfig parse_config(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    detail::check_keys(j, "", {"market", "option", "risk", "run"});
    const auto* market = detail::find(j, "market");
    if (!market) throw ConfigError("config: 'market' section is required");

    ExperimentConfig cfg;
    cfg.market = detail::parse_market(*market);
    if (const auto* option = detail::find(j, "option")) {
        cfg.option = detail::parse_option(*option, cfg.market.model);
    }
    if (const auto* risk = detail::find(j, "risk")) {
        cfg.risk = detail::parse_risk(*risk);
    }
    if (const auto* run = detail::find(j, "run")) {
        cfg.run = detail::parse_run(*run);
    }
    cfg.hash = fnv1a64(j.dump());
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

}  // namespace optmkt
