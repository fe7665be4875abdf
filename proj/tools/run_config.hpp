#pragma once

// RunConfig: every setting the driver accepts, each optional so that a JSON
// config file and command-line flags can be layered (flags win).

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cirkf/errors.hpp"

namespace cirkf::cli {

struct RunConfig {
  std::optional<std::uint64_t> seed;
  std::optional<double> dt;
  std::optional<double> horizon;
  std::optional<std::string> out;
  // simulate
  std::optional<std::size_t> n_steps;
  std::optional<double> lambda0;
  std::optional<double> kappa;
  std::optional<double> theta;
  std::optional<double> sigma;
  std::optional<std::string> scheme;
  // generate
  std::optional<std::size_t> clients;
  std::optional<std::vector<double>> group_boundaries;
  std::optional<double> rho_target;
  std::optional<std::size_t> tx_min;
  std::optional<std::size_t> tx_max;
  // calibrate / predict / experiment / report
  std::optional<std::string> cohort;
  std::optional<std::string> client;
  std::optional<std::string> report;
  std::optional<std::vector<std::string>> models;
  std::optional<std::size_t> n_per_group;
  std::optional<double> train_frac;
  std::optional<std::size_t> threads;
  std::optional<double> init_variance;
  std::optional<double> init_lambda;
  std::optional<bool> traces;
};

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

template <typename T>
void take(const nlohmann::json& j, const char* key, std::optional<T>& slot) {
  if (!j.contains(key)) return;
  try {
    slot = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw UsageError(std::string("config: bad value for '") + key + "'");
  }
}

template <typename T>
void overlay(std::optional<T>& base, const std::optional<T>& top) {
  if (top) base = top;
}

}  // namespace detail

/// Parses a JSON object; unknown keys and wrongly typed values are usage errors.
inline RunConfig parse_run_config(const nlohmann::json& j) {
  if (!j.is_object()) throw UsageError("config: top level must be a JSON object");
  static const std::set<std::string> known{
      "seed",     "dt",          "horizon",          "out",        "n_steps",   "lambda0",
      "kappa",    "theta",       "sigma",            "scheme",     "clients",   "group_boundaries",
      "rho_target", "tx_min",    "tx_max",           "cohort",     "client",    "report",
      "models",   "n_per_group", "train_frac",       "threads",    "init_variance",
      "init_lambda", "traces"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw UsageError("config: unknown key '" + key + "'");

  RunConfig c;
  detail::take(j, "seed", c.seed);
  detail::take(j, "dt", c.dt);
  detail::take(j, "horizon", c.horizon);
  detail::take(j, "out", c.out);
  detail::take(j, "n_steps", c.n_steps);
  detail::take(j, "lambda0", c.lambda0);
  detail::take(j, "kappa", c.kappa);
  detail::take(j, "theta", c.theta);
  detail::take(j, "sigma", c.sigma);
  detail::take(j, "scheme", c.scheme);
  detail::take(j, "clients", c.clients);
  detail::take(j, "group_boundaries", c.group_boundaries);
  detail::take(j, "rho_target", c.rho_target);
  detail::take(j, "tx_min", c.tx_min);
  detail::take(j, "tx_max", c.tx_max);
  detail::take(j, "cohort", c.cohort);
  detail::take(j, "client", c.client);
  detail::take(j, "report", c.report);
  detail::take(j, "models", c.models);
  detail::take(j, "n_per_group", c.n_per_group);
  detail::take(j, "train_frac", c.train_frac);
  detail::take(j, "threads", c.threads);
  detail::take(j, "init_variance", c.init_variance);
  detail::take(j, "init_lambda", c.init_lambda);
  detail::take(j, "traces", c.traces);
  return c;
}

/// Fields set in `top` replace those in `base`.
inline RunConfig merge(RunConfig base, const RunConfig& top) {
  using detail::overlay;
  overlay(base.seed, top.seed);
  overlay(base.dt, top.dt);
  overlay(base.horizon, top.horizon);
  overlay(base.out, top.out);
  overlay(base.n_steps, top.n_steps);
  overlay(base.lambda0, top.lambda0);
  overlay(base.kappa, top.kappa);
  overlay(base.theta, top.theta);
  overlay(base.sigma, top.sigma);
  overlay(base.scheme, top.scheme);
  overlay(base.clients, top.clients);
  overlay(base.group_boundaries, top.group_boundaries);
  overlay(base.rho_target, top.rho_target);
  overlay(base.tx_min, top.tx_min);
  overlay(base.tx_max, top.tx_max);
  overlay(base.cohort, top.cohort);
  overlay(base.client, top.client);
  overlay(base.report, top.report);
  overlay(base.models, top.models);
  overlay(base.n_per_group, top.n_per_group);
  overlay(base.train_frac, top.train_frac);
  overlay(base.threads, top.threads);
  overlay(base.init_variance, top.init_variance);
  overlay(base.init_lambda, top.init_lambda);
  overlay(base.traces, top.traces);
  return base;
}

}  // namespace cirkf::cli
