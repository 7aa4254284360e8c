#pragma once

#include <fstream>
#include <set>

#include <json.hpp>

#include "priorsep/harness.hpp"

// JSON experiment configuration. Every field defaults to the standard
// settings (betas 0.8/0.3/0.1/0.4, 1000 iterations at learning rate 0.05,
// STFT 256/128/256, 3 pyramid levels, d_z = 100, 16384-sample outputs);
// a config file only supplies overrides. Unknown keys are rejected.

namespace priorsep::config {

using nlohmann::json;

struct ConfigError : Error {
    using Error::Error;
};

namespace detail {

inline void check_keys(const json &obj, const std::string &where,
                       const std::set<std::string> &valid) {
    for (const auto &item : obj.items()) {
        if (!valid.count(item.key())) {
            std::string list;
            for (const auto &k : valid) list += (list.empty() ? "" : ", ") + k;
            throw ConfigError("unknown key '" + item.key() + "' in " + where +
                              " (valid keys: " + list + ")");
        }
    }
}

inline double get_number(const json &obj, const std::string &key, double fallback,
                         const std::string &where) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number())
        throw ConfigError(where + "." + key + " must be a number");
    return obj[key].get<double>();
}

inline double require_range(double v, double lo, double hi, const std::string &name) {
    if (!(v >= lo && v <= hi))
        throw ConfigError(name + " = " + std::to_string(v) + " out of range [" +
                          std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return v;
}

inline std::uint64_t get_u64(const json &obj, const std::string &key, std::uint64_t fallback,
                             const std::string &where) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number_unsigned() && !obj[key].is_number_integer())
        throw ConfigError(where + "." + key + " must be an unsigned integer");
    return obj[key].get<std::uint64_t>();
}

inline int get_int(const json &obj, const std::string &key, int fallback, int lo, int hi,
                   const std::string &where) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number_integer())
        throw ConfigError(where + "." + key + " must be an integer");
    const auto v = obj[key].get<long long>();
    if (v < lo || v > hi)
        throw ConfigError(where + "." + key + " = " + std::to_string(v) + " out of range [" +
                          std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return int(v);
}

inline harness::PriorSpec parse_prior(const json &obj, std::size_t index) {
    const std::string where = "priors[" + std::to_string(index) + "]";
    if (!obj.is_object()) throw ConfigError(where + " must be an object");
    if (!obj.contains("kind")) throw ConfigError(where + " needs a 'kind'");
    harness::PriorSpec spec;
    spec.kind = obj["kind"].get<std::string>();
    if (spec.kind == "harmonic") {
        check_keys(obj, where,
                   {"kind", "f_min", "f_max", "harmonics", "alpha_max", "latent_dim"});
        auto &p = spec.harmonic;
        p.f_min = require_range(get_number(obj, "f_min", p.f_min, where), 1.0, 8000.0,
                                where + ".f_min");
        p.f_max = require_range(get_number(obj, "f_max", p.f_max, where), 1.0, 8000.0,
                                where + ".f_max");
        p.harmonics = get_int(obj, "harmonics", p.harmonics, 1, 64, where);
        p.alpha_max = require_range(get_number(obj, "alpha_max", p.alpha_max, where), 0.0,
                                    1000.0, where + ".alpha_max");
        p.latent_dim = get_int(obj, "latent_dim", p.latent_dim, p.harmonics + 2, 100000, where);
    } else if (spec.kind == "percussive") {
        check_keys(obj, where,
                   {"kind", "beta_min", "beta_max", "lp_min", "lp_max", "noise_seed",
                    "latent_dim"});
        auto &p = spec.percussive;
        p.beta_min = require_range(get_number(obj, "beta_min", p.beta_min, where), 0.0, 1000.0,
                                   where + ".beta_min");
        p.beta_max = require_range(get_number(obj, "beta_max", p.beta_max, where), 0.0, 1000.0,
                                   where + ".beta_max");
        p.lp_min = require_range(get_number(obj, "lp_min", p.lp_min, where), 0.0, 1.0,
                                 where + ".lp_min");
        p.lp_max = require_range(get_number(obj, "lp_max", p.lp_max, where), 0.0, 1.0,
                                 where + ".lp_max");
        p.noise_seed = get_u64(obj, "noise_seed", p.noise_seed, where);
        p.latent_dim = get_int(obj, "latent_dim", p.latent_dim, 3, 100000, where);
    } else if (spec.kind == "neural") {
        check_keys(obj, where, {"kind", "weights"});
        if (!obj.contains("weights"))
            throw ConfigError(where + ": neural priors need a 'weights' path");
        spec.weights_path = obj["weights"].get<std::string>();
    } else {
        throw ConfigError(where + ": unknown kind '" + spec.kind +
                          "' (valid: harmonic, percussive, neural)");
    }
    return spec;
}

}  // namespace detail

inline harness::ExperimentConfig parse_config_json(const json &root) {
    if (!root.is_object()) throw ConfigError("config root must be a JSON object");
    detail::check_keys(root, "config", {"priors", "experiment", "pgd", "loss", "stft"});

    harness::ExperimentConfig cfg;
    cfg.priors = {harness::PriorSpec{},
                  harness::PriorSpec{.kind = "percussive"}};  // default two-source setup

    if (root.contains("stft")) {
        const json &o = root["stft"];
        detail::check_keys(o, "stft", {"frame_len", "hop", "fft_len"});
        auto &s = cfg.pgd.loss.stft;
        s.frame_len = detail::get_int(o, "frame_len", s.frame_len, 2, 1 << 20, "stft");
        s.hop = detail::get_int(o, "hop", s.hop, 1, 1 << 20, "stft");
        s.fft_len = detail::get_int(o, "fft_len", s.fft_len, s.frame_len, 1 << 20, "stft");
    }
    if (root.contains("loss")) {
        const json &o = root["loss"];
        detail::check_keys(o, "loss",
                           {"beta_ms", "beta_sd", "beta_mc", "beta_fc", "levels", "eps_den",
                            "ratio_cap"});
        auto &l = cfg.pgd.loss;
        l.beta_ms = detail::require_range(detail::get_number(o, "beta_ms", l.beta_ms, "loss"),
                                          0.0, 1e6, "loss.beta_ms");
        l.beta_sd = detail::require_range(detail::get_number(o, "beta_sd", l.beta_sd, "loss"),
                                          0.0, 1e6, "loss.beta_sd");
        l.beta_mc = detail::require_range(detail::get_number(o, "beta_mc", l.beta_mc, "loss"),
                                          0.0, 1e6, "loss.beta_mc");
        l.beta_fc = detail::require_range(detail::get_number(o, "beta_fc", l.beta_fc, "loss"),
                                          0.0, 1e6, "loss.beta_fc");
        l.levels = detail::get_int(o, "levels", l.levels, 1, 16, "loss");
        l.eps_den = detail::require_range(detail::get_number(o, "eps_den", l.eps_den, "loss"),
                                          1e-300, 1.0, "loss.eps_den");
        l.ratio_cap = detail::require_range(
            detail::get_number(o, "ratio_cap", l.ratio_cap, "loss"), 1.0 + 1e-12, 1e12,
            "loss.ratio_cap");
    }
    if (root.contains("pgd")) {
        const json &o = root["pgd"];
        detail::check_keys(o, "pgd",
                           {"iterations", "learning_rate", "adam_beta1", "adam_beta2",
                            "adam_eps", "trace_stride", "return_best"});
        auto &p = cfg.pgd;
        p.iterations = detail::get_int(o, "iterations", p.iterations, 1, 1 << 30, "pgd");
        p.learning_rate = detail::require_range(
            detail::get_number(o, "learning_rate", p.learning_rate, "pgd"), 0.0, 1e3,
            "pgd.learning_rate");
        p.adam_beta1 = detail::require_range(
            detail::get_number(o, "adam_beta1", p.adam_beta1, "pgd"), 0.0, 1.0 - 1e-12,
            "pgd.adam_beta1");
        p.adam_beta2 = detail::require_range(
            detail::get_number(o, "adam_beta2", p.adam_beta2, "pgd"), 0.0, 1.0 - 1e-12,
            "pgd.adam_beta2");
        p.adam_eps = detail::require_range(detail::get_number(o, "adam_eps", p.adam_eps, "pgd"),
                                           1e-300, 1.0, "pgd.adam_eps");
        p.trace_stride = detail::get_int(o, "trace_stride", p.trace_stride, 1, 1 << 30, "pgd");
        if (o.contains("return_best")) {
            if (!o["return_best"].is_boolean())
                throw ConfigError("pgd.return_best must be a boolean");
            p.return_best = o["return_best"].get<bool>();
        }
    }
    if (root.contains("experiment")) {
        const json &o = root["experiment"];
        detail::check_keys(o, "experiment",
                           {"num_mixtures", "base_seed", "sample_length", "workers"});
        cfg.num_mixtures =
            detail::get_int(o, "num_mixtures", cfg.num_mixtures, 1, 1 << 30, "experiment");
        cfg.base_seed = detail::get_u64(o, "base_seed", cfg.base_seed, "experiment");
        cfg.sample_length = std::size_t(
            detail::get_int(o, "sample_length", int(cfg.sample_length), 2, 1 << 28,
                            "experiment"));
        cfg.workers = detail::get_int(o, "workers", cfg.workers, 1, 4096, "experiment");
    }
    if (root.contains("priors")) {
        if (!root["priors"].is_array()) throw ConfigError("priors must be an array");
        cfg.priors.clear();
        for (std::size_t i = 0; i < root["priors"].size(); ++i)
            cfg.priors.push_back(detail::parse_prior(root["priors"][i], i));
    }
    cfg.validate();
    return cfg;
}

inline harness::ExperimentConfig parse_config(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    json root;
    try {
        root = json::parse(in);
    } catch (const json::parse_error &e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return parse_config_json(root);
}

}  // namespace priorsep::config
