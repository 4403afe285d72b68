#include "ttt/params_json.hpp"

#include <cmath>

#include "ttt/errors.hpp"

namespace ttt {

namespace {

using nlohmann::json;

double number_field(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw Error(ErrorKind::Config, std::string("field '") + key + "' must be a number");
  return j[key].get<double>();
}

double time_field(const json& j, const char* date_key, const char* numeric_key, double fallback,
                  std::optional<Date> epoch) {
  if (j.contains(date_key)) {
    if (!epoch) throw Error(ErrorKind::Config, std::string("field '") + date_key + "' needs a series epoch");
    return year_fraction(*epoch, parse_iso_date(j[date_key].get<std::string>()));
  }
  return number_field(j, numeric_key, fallback);
}

std::optional<std::size_t> param_index(std::string_view name) {
  for (std::size_t k = 0; k < kParamCount; ++k)
    if (param_name(k) == name) return k;
  return std::nullopt;
}

}  // namespace

nlohmann::json rdcm_to_json(const RdcmParams& p, std::optional<Date> epoch) {
  json j;
  j["a"] = p.a;
  j["b_minus"] = p.b_minus;
  j["b_plus"] = p.b_plus;
  j["theta_minus"] = p.theta_minus;
  j["theta_plus"] = p.theta_plus;
  j["tau"] = p.tau;
  j["deadline_T"] = p.deadline_T;
  if (epoch) {
    auto to_date = [&](double t) { return format_iso_date(*epoch + std::chrono::days(std::llround(365.0 * t))); };
    j["tau_date"] = to_date(p.tau);
    j["deadline_date"] = to_date(p.deadline_T);
  }
  return j;
}

RdcmParams rdcm_from_json(const nlohmann::json& j, std::optional<Date> epoch) {
  if (!j.is_object()) throw Error(ErrorKind::Config, "model parameters must be a JSON object");
  RdcmParams p;
  p.a = number_field(j, "a", p.a);
  p.b_minus = number_field(j, "b_minus", p.b_minus);
  p.b_plus = number_field(j, "b_plus", p.b_plus);
  p.theta_minus = number_field(j, "theta_minus", p.theta_minus);
  p.theta_plus = number_field(j, "theta_plus", p.theta_plus);
  p.tau = time_field(j, "tau_date", "tau", p.tau, epoch);
  p.deadline_T = time_field(j, "deadline_date", "deadline_T", p.deadline_T, epoch);
  validate_params(p);
  return p;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw Error(ErrorKind::Config, "matrix must be a non-empty array of rows");
  const std::size_t cols = j[0].size();
  Eigen::MatrixXd m(j.size(), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw Error(ErrorKind::Config, "matrix rows must have equal length");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

nlohmann::json srdcm_to_json(const SrdcmParams& p, std::optional<Date> epoch) {
  json j;
  j["regimes"] = json::array();
  for (const auto& r : p.regimes) j["regimes"].push_back(rdcm_to_json(r, epoch));
  j["pi0"] = std::vector<double>(p.pi0.data(), p.pi0.data() + p.pi0.size());
  j["trans_P"] = matrix_to_json(p.trans_P);
  j["delta_bar"] = p.delta_bar;
  return j;
}

SrdcmParams srdcm_from_json(const nlohmann::json& j, std::optional<Date> epoch) {
  if (!j.is_object() || !j.contains("regimes") || !j["regimes"].is_array())
    throw Error(ErrorKind::Config, "switching model JSON needs a 'regimes' array");
  SrdcmParams p;
  for (const auto& r : j["regimes"]) p.regimes.push_back(rdcm_from_json(r, epoch));
  const Eigen::Index m = static_cast<Eigen::Index>(p.regimes.size());
  if (j.contains("pi0")) {
    auto v = j["pi0"].get<std::vector<double>>();
    p.pi0 = Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  } else {
    p.pi0 = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
  }
  if (j.contains("trans_P"))
    p.trans_P = matrix_from_json(j["trans_P"]);
  else
    p.trans_P = Eigen::MatrixXd::Constant(m, m, 1.0 / static_cast<double>(m));
  p.delta_bar = number_field(j, "delta_bar", p.delta_bar);
  validate_srdcm(p, /*allow_zero_transitions=*/true);
  return p;
}

ParamBox box_from_json(const nlohmann::json& j, ParamBox base) {
  for (const char* side : {"lower", "upper"}) {
    if (!j.contains(side)) continue;
    for (const auto& [name, value] : j[side].items()) {
      auto k = param_index(name);
      if (!k) throw Error(ErrorKind::Config, "unknown parameter in box: " + name);
      (std::string_view(side) == "lower" ? base.lower : base.upper)[*k] = value.get<double>();
    }
  }
  for (std::size_t k = 0; k < kParamCount; ++k)
    if (!(base.lower[k] < base.upper[k])) throw Error(ErrorKind::Config, "box lower bound must be below the upper bound");
  return base;
}

ParamMask mask_from_json(const nlohmann::json& j) {
  ParamMask mask{};
  if (!j.is_array()) throw Error(ErrorKind::Config, "fixed parameters must be a list of names");
  for (const auto& name : j) {
    auto k = param_index(name.get<std::string>());
    if (!k) throw Error(ErrorKind::Config, "unknown parameter: " + name.get<std::string>());
    mask[*k] = true;
  }
  return mask;
}

nlohmann::json mask_to_json(const ParamMask& mask) {
  json out = json::array();
  for (std::size_t k = 0; k < kParamCount; ++k)
    if (mask[k]) out.push_back(std::string(param_name(k)));
  return out;
}

}  // namespace ttt
