#pragma once

// Strict JSON configuration for sweeps. Keys mirror SweepSpec in snake_case;
// unknown keys and wrong types are rejected with a format_error.

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "tslab/error.hpp"
#include "tslab/experiments.hpp"

namespace tslab::config {

using nlohmann::json;

inline const std::set<std::string>& sweep_keys() {
    static const std::set<std::string> keys{
        "variant",      "rho_a",       "rho_b",         "random_pairs", "pair_seed",
        "hyper",        "seeds",       "n_s",           "n_x",          "n_y",
        "mode",         "eta",         "iterations",    "iterations_regularized",
        "soft_samples", "soft_eta",    "soft_iterations", "eval_samples", "threads",
        "timing",
    };
    return keys;
}

namespace detail {

template <typename T>
T get(const json& j, const std::string& key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::format_error, "config key '" + key + "': " + e.what());
    }
}

inline std::vector<double> number_list(const json& j, const std::string& key) {
    const json& v = j.at(key);
    if (v.is_number()) return {v.get<double>()};
    require(v.is_array(), ErrorCode::format_error, "config key '" + key + "' must be a number or an array");
    std::vector<double> out;
    for (const auto& x : v) {
        require(x.is_number(), ErrorCode::format_error, "config key '" + key + "' must hold numbers");
        out.push_back(x.get<double>());
    }
    return out;
}

inline std::size_t count(const json& j, const std::string& key) {
    const json& v = j.at(key);
    require(v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0), ErrorCode::format_error,
            "config key '" + key + "' must be a non-negative integer");
    return v.get<std::size_t>();
}

}  // namespace detail

/// Builds a SweepSpec from a parsed JSON object, starting from `base` so
/// callers can supply profile defaults.
inline experiments::SweepSpec sweep_from_json(const json& j, experiments::SweepSpec base = {}) {
    require(j.is_object(), ErrorCode::format_error, "config must be a JSON object");
    for (const auto& [key, _] : j.items())
        require(sweep_keys().count(key) == 1, ErrorCode::format_error, "unknown config key '" + key + "'");

    experiments::SweepSpec s = std::move(base);
    if (j.contains("variant")) {
        const auto name = detail::get<std::string>(j, "variant");
        const auto v = parse_variant(name);
        require(v.has_value(), ErrorCode::format_error, "unknown variant '" + name + "'");
        s.variant = *v;
    }
    if (j.contains("rho_a")) s.rho_a = detail::number_list(j, "rho_a");
    if (j.contains("rho_b")) s.rho_b = detail::number_list(j, "rho_b");
    if (j.contains("random_pairs")) s.random_pairs = detail::count(j, "random_pairs");
    if (j.contains("pair_seed")) s.pair_seed = detail::count(j, "pair_seed");
    if (j.contains("hyper")) s.hypers = detail::number_list(j, "hyper");
    if (j.contains("seeds")) {
        const json& v = j.at("seeds");
        s.seeds.clear();
        if (v.is_number()) {
            // a bare count n means seeds 0..n-1
            for (std::size_t i = 0; i < detail::count(j, "seeds"); ++i) s.seeds.push_back(i);
        } else {
            require(v.is_array(), ErrorCode::format_error, "config key 'seeds' must be a count or an array");
            for (const auto& x : v) {
                require(x.is_number_unsigned() || (x.is_number_integer() && x.get<long long>() >= 0),
                        ErrorCode::format_error, "seeds must be non-negative integers");
                s.seeds.push_back(x.get<std::uint64_t>());
            }
        }
    }
    if (j.contains("n_s")) s.n_s = static_cast<Eigen::Index>(detail::count(j, "n_s"));
    if (j.contains("n_x")) s.n_x = static_cast<Eigen::Index>(detail::count(j, "n_x"));
    if (j.contains("n_y")) s.n_y = static_cast<Eigen::Index>(detail::count(j, "n_y"));
    if (j.contains("mode")) {
        const auto m = detail::get<std::string>(j, "mode");
        require(m == "closed_form" || m == "iterative", ErrorCode::format_error,
                "mode must be closed_form or iterative, got '" + m + "'");
        s.mode = m == "closed_form" ? experiments::Mode::closed_form : experiments::Mode::iterative;
    }
    if (j.contains("eta")) s.eta = detail::get<double>(j, "eta");
    if (j.contains("iterations")) s.iters = detail::count(j, "iterations");
    if (j.contains("iterations_regularized")) s.iters_regularized = detail::count(j, "iterations_regularized");
    if (j.contains("soft_samples")) s.soft.n_samples = detail::count(j, "soft_samples");
    if (j.contains("soft_eta")) s.soft.eta = detail::get<double>(j, "soft_eta");
    if (j.contains("soft_iterations")) s.soft.iters = detail::count(j, "soft_iterations");
    if (j.contains("eval_samples")) s.eval_samples = detail::count(j, "eval_samples");
    if (j.contains("threads")) s.threads = detail::count(j, "threads");
    if (j.contains("timing")) s.timing = detail::get<bool>(j, "timing");
    s.validate();
    return s;
}

inline json parse_json_text(const std::string& text, const std::string& origin) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::format_error, origin + ": " + e.what());
    }
}

inline json load_json(const std::filesystem::path& path) {
    std::ifstream f(path);
    require(static_cast<bool>(f), ErrorCode::io_error, "cannot open config file " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_json_text(ss.str(), path.string());
}

}  // namespace tslab::config
