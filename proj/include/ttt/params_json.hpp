#pragma once

#include <optional>

#include <json.hpp>

#include "ttt/dates.hpp"
#include "ttt/rdcm.hpp"
#include "ttt/srdcm.hpp"

namespace ttt {

// {a, b_minus, b_plus, theta_minus, theta_plus, tau, deadline_T} plus
// tau_date / deadline_date when an epoch is known. On input a *_date field
// takes precedence and needs the epoch; missing continuous entries keep
// their defaults.
nlohmann::json rdcm_to_json(const RdcmParams& p, std::optional<Date> epoch = std::nullopt);
RdcmParams rdcm_from_json(const nlohmann::json& j, std::optional<Date> epoch = std::nullopt);

// {regimes: [...], pi0, trans_P, delta_bar}
nlohmann::json srdcm_to_json(const SrdcmParams& p, std::optional<Date> epoch = std::nullopt);
SrdcmParams srdcm_from_json(const nlohmann::json& j, std::optional<Date> epoch = std::nullopt);

// {lower: {name: value}, upper: {...}} over the continuous parameter names.
ParamBox box_from_json(const nlohmann::json& j, ParamBox base = {});
// List of parameter names to hold fixed.
ParamMask mask_from_json(const nlohmann::json& j);
nlohmann::json mask_to_json(const ParamMask& mask);

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);
nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);

}  // namespace ttt
