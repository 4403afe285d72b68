#include <doctest.h>

#include <cmath>
#include <sstream>

#include "ttt/errors.hpp"
#include "ttt/dates.hpp"
#include "ttt/market_data.hpp"

using namespace ttt;

namespace {

BondQuote quote(const char* date, const char* isin, Label label, const char* maturity, double df) {
  return {parse_iso_date(date), isin, label, parse_iso_date(maturity), df};
}

}  // namespace

TEST_CASE("iso dates round trip and reject malformed text") {
  CHECK(format_iso_date(parse_iso_date("2021-03-01")) == "2021-03-01");
  CHECK_THROWS_AS(parse_iso_date("2021-3-1"), Error);
  CHECK_THROWS_AS(parse_iso_date("2021-02-30"), Error);
  CHECK(year_fraction(parse_iso_date("2021-01-01"), parse_iso_date("2022-01-01")) == doctest::Approx(1.0));
  CHECK(add_business_days(parse_iso_date("2021-01-08"), 1) == parse_iso_date("2021-01-11"));
}

TEST_CASE("greenium is the annualized log discount gap") {
  // 0.2 ln(0.96 / 0.95) to 30 digits
  CHECK(std::abs(greenium(0.95, 0.96, 5.0) - 0.00209425997345908077) < 1e-17);
  CHECK(greenium(0.9, 0.9, 3.0) == 0.0);
  CHECK(greenium(0.90, 0.91, 2.0) > 0.0);  // green bond priced higher
  CHECK_THROWS_AS(greenium(0.9, 0.9, 0.0), Error);
  CHECK_THROWS_AS(greenium(-0.9, 0.9, 1.0), Error);
}

TEST_CASE("node differences chain greenium points on one date") {
  const auto bs = quote("2021-01-04", "B1", Label::Brown, "2025-01-04", 0.950);
  const auto gs = quote("2021-01-04", "G1", Label::Green, "2025-01-04", 0.951);
  const auto bl = quote("2021-01-04", "B2", Label::Brown, "2030-01-04", 0.869);
  const auto gl = quote("2021-01-04", "G2", Label::Green, "2030-01-04", 0.871);
  const double t_s = year_fraction(parse_iso_date("2021-01-04"), parse_iso_date("2025-01-04"));
  const double t_l = year_fraction(parse_iso_date("2021-01-04"), parse_iso_date("2030-01-04"));
  const double expected = -(std::log(0.950) - std::log(0.951)) / t_s + (std::log(0.869) - std::log(0.871)) / t_l;
  CHECK(node_diff(greenium_point(bs, gs), greenium_point(bl, gl)) == doctest::Approx(expected).epsilon(1e-14));
  auto other = quote("2021-01-05", "G1", Label::Green, "2025-01-04", 0.951);
  CHECK_THROWS_AS(greenium_point(bs, other), Error);
}

TEST_CASE("ingestion keeps complete quartets and reports dropped dates") {
  std::istringstream csv(
      "quote_date,isin,label,maturity_date,discount_factor\n"
      "2021-01-04,G1,green,2025-01-04,0.951\n2021-01-04,B1,brown,2025-01-04,0.950\n"
      "2021-01-04,G2,green,2030-01-04,0.871\n2021-01-04,B2,brown,2030-01-04,0.869\n"
      "2021-01-05,G1,green,2025-01-04,0.952\n2021-01-05,B1,brown,2025-01-04,0.950\n"
      "2021-01-05,G2,green,2030-01-04,0.872\n"
      "2021-01-06,G1,green,2025-01-04,0.953\n2021-01-06,B1,brown,2025-01-04,0.951\n"
      "2021-01-06,G2,green,2030-01-04,0.873\n2021-01-06,B2,brown,2030-01-04,0.870\n");
  const auto quotes = read_quotes_csv(csv);
  const auto res = build_node_diff_series(quotes, parse_iso_date("2025-01-04"), parse_iso_date("2030-01-04"));
  REQUIRE(res.series.size() == 2);
  CHECK(res.report.dates_seen == 3);
  CHECK(res.report.dropped_dates.size() == 1);
  CHECK(res.series.times[0] == 0.0);
  CHECK(res.series.times[1] == doctest::Approx(2.0 / 365.0));
  const double t_s = year_fraction(parse_iso_date("2021-01-06"), parse_iso_date("2025-01-04"));
  const double t_l = year_fraction(parse_iso_date("2021-01-06"), parse_iso_date("2030-01-04"));
  CHECK(res.series.values[1] ==
        doctest::Approx(std::log(0.953 / 0.951) / t_s - std::log(0.873 / 0.870) / t_l).epsilon(1e-13));
}

TEST_CASE("ingestion errors carry their kind") {
  std::istringstream missing("quote_date,isin,maturity_date,discount_factor\n2021-01-04,G1,2025-01-04,0.9\n");
  try {
    read_quotes_csv(missing);
    FAIL("expected a missing-column error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MissingColumn);
  }
  std::istringstream bad("quote_date,isin,label,maturity_date,discount_factor\n2021-01-04,G1,blue,2025-01-04,0.9\n");
  CHECK_THROWS_AS(read_quotes_csv(bad), Error);
  std::istringstream incomplete(
      "quote_date,isin,label,maturity_date,discount_factor\n2021-01-04,G1,green,2025-01-04,0.951\n");
  try {
    build_node_diff_series(read_quotes_csv(incomplete), parse_iso_date("2025-01-04"), parse_iso_date("2030-01-04"));
    FAIL("expected an empty-series error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptySeries);
  }
}

TEST_CASE("series CSV round trip") {
  NodeDiffSeries s;
  s.t0 = parse_iso_date("2020-01-01");
  s.times = {0.0, 1.0 / 365.0, 4.0 / 365.0};
  s.values = {0.0123456789012, -0.004, 0.0};
  s.dates = {parse_iso_date("2020-01-01"), parse_iso_date("2020-01-02"), parse_iso_date("2020-01-05")};
  std::stringstream io;
  write_series_csv(io, s);
  const auto back = read_series_csv(io);
  REQUIRE(back.size() == 3);
  CHECK(back.t0 == s.t0);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.values[i] == doctest::Approx(s.values[i]).epsilon(1e-11));
    CHECK(back.times[i] == doctest::Approx(s.times[i]).epsilon(1e-11));
  }
}

TEST_CASE("series validation rejects unordered times") {
  NodeDiffSeries s;
  s.times = {0.0, 0.2, 0.1};
  s.values = {0.0, 0.0, 0.0};
  try {
    validate_series(s);
    FAIL("expected an ordering error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Ordering);
  }
}

TEST_CASE("grid regularization subsamples without interpolating") {
  NodeDiffSeries s;
  s.t0 = parse_iso_date("2021-01-04");
  Date d = s.t0;
  for (int i = 0; i < 60; ++i) {
    s.dates.push_back(d);
    s.times.push_back(year_fraction(s.t0, d));
    s.values.push_back(0.001 * i);
    d = add_business_days(d, 1);
  }
  const auto reg = regularize_grid(s, 0.95);
  CHECK(reg.coverage >= 0.95);
  CHECK(reg.spacing_days >= 1);
  for (std::size_t i = 0; i < reg.series.size(); ++i) {
    const auto it = std::find(s.dates.begin(), s.dates.end(), reg.series.dates[i]);
    REQUIRE(it != s.dates.end());
    CHECK(reg.series.values[i] == s.values[static_cast<std::size_t>(it - s.dates.begin())]);
  }
  const auto lattice = with_lattice_times(s, 1.0 / 252.0);
  CHECK(lattice.times[10] == doctest::Approx(10.0 / 252.0));
}
