#include <doctest.h>

#include "ttt/errors.hpp"
#include "ttt/params_json.hpp"

using namespace ttt;
using nlohmann::json;

TEST_CASE("single-regime parameters round-trip") {
  const RdcmParams p{.a = 6.5, .b_minus = -0.01, .b_plus = 1.2, .theta_minus = 0.25, .theta_plus = 0.8,
                     .tau = 1.5, .deadline_T = 3.0};
  const RdcmParams q = rdcm_from_json(json::parse(rdcm_to_json(p).dump()));
  CHECK(to_vector(q) == to_vector(p));
  CHECK(q.tau == p.tau);
  CHECK(q.deadline_T == p.deadline_T);
}

TEST_CASE("dates override year fractions when an epoch is given") {
  const Date epoch = parse_iso_date("2020-01-01");
  const RdcmParams p{.tau = 1.0, .deadline_T = 2.0};
  const json j = rdcm_to_json(p, epoch);
  CHECK(j.contains("tau_date"));
  CHECK(rdcm_from_json(j, epoch).deadline_T == doctest::Approx(2.0).epsilon(1e-2));
  json k = {{"tau", 0.5}, {"deadline_T", 9.0}, {"deadline_date", "2022-01-01"}};
  CHECK(rdcm_from_json(k, epoch).deadline_T == doctest::Approx(2.0).epsilon(1e-2));
  CHECK(rdcm_from_json(k, epoch).tau == 0.5);
  CHECK_THROWS_AS(rdcm_from_json(k), Error);
  // defaults for missing entries
  CHECK(rdcm_from_json(json{{"deadline_T", 2.0}}).b_plus == 1.0);
}

TEST_CASE("switching parameters round-trip") {
  SrdcmParams sp;
  sp.regimes = {RdcmParams{.a = 20, .theta_minus = 0.38, .tau = 12.5, .deadline_T = 14},
                RdcmParams{.a = 7, .theta_minus = 0.1, .tau = 20, .deadline_T = 24.5}};
  sp.pi0 = Eigen::Vector2d(0.3, 0.7);
  sp.trans_P.resize(2, 2);
  sp.trans_P << 0.9, 0.1, 0.05, 0.95;
  sp.delta_bar = 1.0 / 260.0;
  const SrdcmParams q = srdcm_from_json(json::parse(srdcm_to_json(sp).dump()));
  REQUIRE(q.regime_count() == 2);
  CHECK(q.regimes[1].deadline_T == 24.5);
  CHECK(q.pi0 == sp.pi0);
  CHECK(q.trans_P == sp.trans_P);
  CHECK(q.delta_bar == sp.delta_bar);
  CHECK_THROWS_AS(srdcm_from_json(json{{"regimes", json::array()}}), Error);
}

TEST_CASE("boxes, masks and matrices") {
  const ParamBox b = box_from_json(json{{"lower", {{"a", 0.5}}}, {"upper", {{"theta_minus", 0.9}}}});
  CHECK(b.lower[0] == 0.5);
  CHECK(b.upper[3] == 0.9);
  CHECK(b.lower[1] == ParamBox{}.lower[1]);
  CHECK_THROWS_AS(box_from_json(json{{"lower", {{"nope", 1.0}}}}), Error);

  const ParamMask m = mask_from_json(json{"b_plus", "theta_plus"});
  CHECK(m == ParamMask{false, false, true, false, true});
  CHECK(mask_from_json(mask_to_json(m)) == m);

  Eigen::MatrixXd a(2, 3);
  a << 1, 2, 3, 4, 5, 6;
  CHECK(matrix_from_json(matrix_to_json(a)) == a);
  CHECK_THROWS_AS(matrix_from_json(json{{1, 2}, {3}}), Error);
}
