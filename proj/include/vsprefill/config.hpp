#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vsprefill/indexer.hpp"
#include "vsprefill/sparsity.hpp"

namespace vsp {

// The knobs every subcommand shares, with the documented defaults. Each key
// exists both as a config-file line (key=value) and as a CLI flag.
struct Config {
    std::size_t n = 128;
    std::size_t d = 16;
    std::size_t d_h = 64;
    double tau_v = 0.9;
    double tau_s = 0.9;
    std::size_t min_budget = 1;
    std::size_t block = 32;
    std::size_t steps = 2000;
    double lr_peak = 1e-3;
    std::size_t warmup = 100;
    std::size_t accumulation = 1;
    std::uint64_t seed = 1;
    double eps = 1e-8;
    std::string kl_direction = "forward";
    std::string slash_mapping = "reverse";
};

inline const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = {
        "n",     "d",        "d_h",          "tau_v", "tau_s",
        "min_budget", "block", "steps",      "lr_peak", "warmup",
        "accumulation", "seed", "eps",       "kl_direction", "slash_mapping",
    };
    return keys;
}

// Current value of one key, in the same text form the config file accepts.
inline std::string config_value(const Config& cfg, const std::string& key) {
    std::ostringstream os;
    if (key == "n") os << cfg.n;
    else if (key == "d") os << cfg.d;
    else if (key == "d_h") os << cfg.d_h;
    else if (key == "tau_v") os << cfg.tau_v;
    else if (key == "tau_s") os << cfg.tau_s;
    else if (key == "min_budget") os << cfg.min_budget;
    else if (key == "block") os << cfg.block;
    else if (key == "steps") os << cfg.steps;
    else if (key == "lr_peak") os << cfg.lr_peak;
    else if (key == "warmup") os << cfg.warmup;
    else if (key == "accumulation") os << cfg.accumulation;
    else if (key == "seed") os << cfg.seed;
    else if (key == "eps") os << cfg.eps;
    else if (key == "kl_direction") os << cfg.kl_direction;
    else if (key == "slash_mapping") os << cfg.slash_mapping;
    else throw std::invalid_argument("config: unknown key '" + key + "'");
    return os.str();
}

inline KlDirection parse_kl_direction(const std::string& s) {
    if (s == "forward") return KlDirection::Forward;
    if (s == "reverse") return KlDirection::Reverse;
    throw std::invalid_argument("config: kl_direction must be forward or reverse, got '" + s + "'");
}

inline SlashMapping parse_slash_mapping(const std::string& s) {
    if (s == "reverse") return SlashMapping::Reverse;
    if (s == "identity") return SlashMapping::Identity;
    throw std::invalid_argument("config: slash_mapping must be reverse or identity, got '" + s +
                                "'");
}

namespace detail {

inline std::size_t parse_count(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const unsigned long long x = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return static_cast<std::size_t>(x);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: invalid count for " + key + ": '" + value + "'");
    }
}

inline double parse_real(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return x;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: invalid number for " + key + ": '" + value + "'");
    }
}

}  // namespace detail

inline void apply_config_entry(Config& cfg, const std::string& key, const std::string& value) {
    if (key == "n") cfg.n = detail::parse_count(key, value);
    else if (key == "d") cfg.d = detail::parse_count(key, value);
    else if (key == "d_h") cfg.d_h = detail::parse_count(key, value);
    else if (key == "tau_v") cfg.tau_v = detail::parse_real(key, value);
    else if (key == "tau_s") cfg.tau_s = detail::parse_real(key, value);
    else if (key == "min_budget") cfg.min_budget = detail::parse_count(key, value);
    else if (key == "block") cfg.block = detail::parse_count(key, value);
    else if (key == "steps") cfg.steps = detail::parse_count(key, value);
    else if (key == "lr_peak") cfg.lr_peak = detail::parse_real(key, value);
    else if (key == "warmup") cfg.warmup = detail::parse_count(key, value);
    else if (key == "accumulation") cfg.accumulation = detail::parse_count(key, value);
    else if (key == "seed") cfg.seed = detail::parse_count(key, value);
    else if (key == "eps") cfg.eps = detail::parse_real(key, value);
    else if (key == "kl_direction") { parse_kl_direction(value); cfg.kl_direction = value; }
    else if (key == "slash_mapping") { parse_slash_mapping(value); cfg.slash_mapping = value; }
    else throw std::invalid_argument("config: unknown key '" + key + "'");
}

// Plain key=value lines; blank lines and #-comments allowed; unknown keys are
// an error rather than a silent typo.
inline Config load_config_file(const std::string& path, Config cfg = Config{}) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::size_t begin = line.find_first_not_of(" \t\r");
        if (begin == std::string::npos) continue;
        const std::size_t end = line.find_last_not_of(" \t\r");
        line = line.substr(begin, end - begin + 1);
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                        " is not key=value: '" + line + "'");
        }
        auto trim = [](std::string s) {
            const std::size_t b = s.find_first_not_of(" \t");
            if (b == std::string::npos) return std::string();
            const std::size_t e = s.find_last_not_of(" \t");
            return s.substr(b, e - b + 1);
        };
        apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

inline TrainConfig to_train_config(const Config& cfg) {
    TrainConfig t;
    t.steps = cfg.steps;
    t.lr_peak = cfg.lr_peak;
    t.warmup_steps = cfg.warmup;
    t.accumulation = cfg.accumulation;
    t.seed = cfg.seed;
    t.eps = cfg.eps;
    t.kl_direction = parse_kl_direction(cfg.kl_direction);
    t.slash_mapping = parse_slash_mapping(cfg.slash_mapping);
    t.check();
    return t;
}

inline BudgetConfig to_budget_config(const Config& cfg) {
    BudgetConfig b;
    b.tau_v = cfg.tau_v;
    b.tau_s = cfg.tau_s;
    b.min_budget = cfg.min_budget;
    b.check();
    return b;
}

}  // namespace vsp
