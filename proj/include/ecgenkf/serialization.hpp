#pragma once

// JSON documents for wave parameters, filter configuration and baseline
// parameters (nlohmann/json ADL hooks).

#include <json.hpp>

#include <string>

#include "baselines.hpp"
#include "enkf.hpp"
#include "model.hpp"

namespace ecgenkf {

inline void to_json(nlohmann::json& j, const GaussianWaveParams& p) {
  j = nlohmann::json{{"alpha", p.alpha}, {"b", p.b}, {"theta", p.theta}};
}

inline void from_json(const nlohmann::json& j, GaussianWaveParams& p) {
  for (const char* key : {"alpha", "b", "theta"}) {
    if (!j.contains(key)) throw ConfigError(std::string("wave parameters: missing key \"") + key + "\"");
    if (!j.at(key).is_array() || j.at(key).size() != kWaves) {
      throw ConfigError(std::string("wave parameters: \"") + key + "\" must be an array of 5 numbers (P,Q,R,S,T)");
    }
  }
  j.at("alpha").get_to(p.alpha);
  j.at("b").get_to(p.b);
  j.at("theta").get_to(p.theta);
  if (auto d = validate(p)) throw ConfigError("wave parameters: " + *d);
}

namespace enkf {

namespace detail {

inline nlohmann::json optional_to_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json("auto");
}

inline std::optional<double> optional_from_json(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) return std::nullopt;
  const auto& v = j.at(key);
  if (v.is_string() && v.get<std::string>() == "auto") return std::nullopt;
  if (!v.is_number()) throw ConfigError(std::string("filter config: \"") + key + "\" must be a number or \"auto\"");
  return v.get<double>();
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const FilterConfig& c) {
  j = nlohmann::json{{"n_ensemble", c.n_ensemble},
                     {"q_theta", c.q_theta},
                     {"q_z", detail::optional_to_json(c.q_z)},
                     {"r_phi", detail::optional_to_json(c.r_phi)},
                     {"r_s", detail::optional_to_json(c.r_s)},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, FilterConfig& c) {
  c = FilterConfig{};
  if (j.contains("n_ensemble")) j.at("n_ensemble").get_to(c.n_ensemble);
  if (j.contains("q_theta")) j.at("q_theta").get_to(c.q_theta);
  c.q_z = detail::optional_from_json(j, "q_z");
  c.r_phi = detail::optional_from_json(j, "r_phi");
  c.r_s = detail::optional_from_json(j, "r_s");
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
  validate(c);
}

}  // namespace enkf

namespace baselines {

NLOHMANN_JSON_SERIALIZE_ENUM(ThresholdRule, {{ThresholdRule::universal, "universal"}, {ThresholdRule::fixed, "fixed"}})

inline void to_json(nlohmann::json& j, const BaselineParams& p) {
  j = nlohmann::json{
      {"sg", {{"window", p.sg.window}, {"polyorder", p.sg.polyorder}}},
      {"wavelet",
       {{"levels", p.wavelet.levels}, {"threshold_rule", p.wavelet.rule}, {"threshold", p.wavelet.fixed_threshold},
        {"mode", "soft"}}},
      {"nlms", {{"taps", p.nlms.taps}, {"mu", p.nlms.mu}}},
      {"rls", {{"taps", p.rls.taps}, {"forgetting", p.rls.forgetting}, {"delta", p.rls.delta}}},
      {"tvd",
       {{"lambda", p.tvd.lambda ? nlohmann::json(*p.tvd.lambda) : nlohmann::json("auto")},
        {"lambda_scale", p.tvd.lambda_scale}}},
      {"ekf", p.ekf}};
}

inline void from_json(const nlohmann::json& j, BaselineParams& p) {
  p = BaselineParams{};
  if (j.contains("sg")) {
    const auto& s = j.at("sg");
    if (s.contains("window")) s.at("window").get_to(p.sg.window);
    if (s.contains("polyorder")) s.at("polyorder").get_to(p.sg.polyorder);
  }
  if (j.contains("wavelet")) {
    const auto& w = j.at("wavelet");
    if (w.contains("levels")) w.at("levels").get_to(p.wavelet.levels);
    if (w.contains("threshold_rule")) w.at("threshold_rule").get_to(p.wavelet.rule);
    if (w.contains("threshold")) w.at("threshold").get_to(p.wavelet.fixed_threshold);
    if (w.contains("mode") && w.at("mode") != "soft") throw ConfigError("wavelet.mode: only \"soft\" is supported");
  }
  if (j.contains("nlms")) {
    const auto& n = j.at("nlms");
    if (n.contains("taps")) n.at("taps").get_to(p.nlms.taps);
    if (n.contains("mu")) n.at("mu").get_to(p.nlms.mu);
  }
  if (j.contains("rls")) {
    const auto& r = j.at("rls");
    if (r.contains("taps")) r.at("taps").get_to(p.rls.taps);
    if (r.contains("forgetting")) r.at("forgetting").get_to(p.rls.forgetting);
    if (r.contains("delta")) r.at("delta").get_to(p.rls.delta);
  }
  if (j.contains("tvd")) {
    const auto& t = j.at("tvd");
    p.tvd.lambda = enkf::detail::optional_from_json(t, "lambda");
    if (t.contains("lambda_scale")) t.at("lambda_scale").get_to(p.tvd.lambda_scale);
  }
  if (j.contains("ekf")) j.at("ekf").get_to(p.ekf);
  validate(p);
}

}  // namespace baselines

}  // namespace ecgenkf
