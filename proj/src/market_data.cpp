#include "ttt/market_data.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "ttt/errors.hpp"

namespace ttt {

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    std::size_t comma = line.find(',', start);
    std::string_view field = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
      field.remove_suffix(1);
    fields.push_back(field);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

double parse_double(std::string_view text, std::size_t line_no, std::string_view column) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty())
    throw Error(ErrorKind::Parse, "row " + std::to_string(line_no) + ": column '" + std::string(column) +
                                      "' is not a number: '" + std::string(text) + "'");
  return value;
}

Date parse_date_field(std::string_view text, std::size_t line_no, std::string_view column) {
  try {
    return parse_iso_date(text);
  } catch (const Error&) {
    throw Error(ErrorKind::Parse, "row " + std::to_string(line_no) + ": column '" + std::string(column) +
                                      "' is not an ISO-8601 date: '" + std::string(text) + "'");
  }
}

struct Header {
  std::map<std::string, std::size_t, std::less<>> index;

  std::size_t require(std::string_view name) const {
    auto it = index.find(name);
    if (it == index.end()) throw Error(ErrorKind::MissingColumn, "missing column '" + std::string(name) + "'");
    return it->second;
  }
};

Header read_header(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::Parse, "empty CSV: no header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
  Header header;
  auto fields = split_csv(line);
  for (std::size_t i = 0; i < fields.size(); ++i) header.index.emplace(std::string(fields[i]), i);
  return header;
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

void validate_series(const NodeDiffSeries& series) {
  if (series.times.size() != series.values.size())
    throw Error(ErrorKind::Domain, "series times and values differ in length");
  if (!series.dates.empty() && series.dates.size() != series.values.size())
    throw Error(ErrorKind::Domain, "series dates and values differ in length");
  for (std::size_t i = 1; i < series.times.size(); ++i)
    if (!(series.times[i] > series.times[i - 1]))
      throw Error(ErrorKind::Ordering, "series times not strictly increasing at index " + std::to_string(i));
  for (std::size_t i = 0; i < series.values.size(); ++i)
    if (!std::isfinite(series.values[i]) || !std::isfinite(series.times[i]))
      throw Error(ErrorKind::Domain, "non-finite series entry at index " + std::to_string(i));
}

double greenium(double discount_brown, double discount_green, double time_to_maturity) {
  if (!(time_to_maturity > 0.0)) throw Error(ErrorKind::Domain, "time_to_maturity must be positive");
  if (!(discount_brown > 0.0)) throw Error(ErrorKind::Domain, "discount_brown must be positive");
  if (!(discount_green > 0.0)) throw Error(ErrorKind::Domain, "discount_green must be positive");
  return -(std::log(discount_brown) - std::log(discount_green)) / time_to_maturity;
}

GreeniumPoint greenium_point(const BondQuote& brown, const BondQuote& green) {
  if (brown.quote_date != green.quote_date || brown.maturity_date != green.maturity_date)
    throw Error(ErrorKind::Alignment, "green/brown quotes differ in quote or maturity date");
  double ttm = year_fraction(brown.quote_date, brown.maturity_date);
  return {brown.quote_date, brown.maturity_date, greenium(brown.discount_factor, green.discount_factor, ttm)};
}

double node_diff(const GreeniumPoint& short_point, const GreeniumPoint& long_point) {
  if (short_point.quote_date != long_point.quote_date)
    throw Error(ErrorKind::Alignment, "node_diff: points quoted on different dates");
  if (!(short_point.maturity_date < long_point.maturity_date))
    throw Error(ErrorKind::Alignment, "node_diff: short maturity must precede long maturity");
  return short_point.greenium - long_point.greenium;
}

std::vector<BondQuote> read_quotes_csv(std::istream& in) {
  Header header = read_header(in);
  const std::size_t c_date = header.require("quote_date");
  const std::size_t c_isin = header.require("isin");
  const std::size_t c_label = header.require("label");
  const std::size_t c_maturity = header.require("maturity_date");
  const std::size_t c_df = header.require("discount_factor");
  const std::size_t width = header.index.size();

  std::vector<BondQuote> quotes;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto f = split_csv(line);
    if (f.size() != width)
      throw Error(ErrorKind::Parse, "row " + std::to_string(line_no) + ": expected " + std::to_string(width) +
                                        " fields, found " + std::to_string(f.size()));
    BondQuote q;
    q.quote_date = parse_date_field(f[c_date], line_no, "quote_date");
    q.isin = std::string(f[c_isin]);
    if (f[c_label] == "green")
      q.label = Label::Green;
    else if (f[c_label] == "brown")
      q.label = Label::Brown;
    else
      throw Error(ErrorKind::Parse, "row " + std::to_string(line_no) + ": label must be green or brown, found '" +
                                        std::string(f[c_label]) + "'");
    q.maturity_date = parse_date_field(f[c_maturity], line_no, "maturity_date");
    q.discount_factor = parse_double(f[c_df], line_no, "discount_factor");
    if (!(q.discount_factor > 0.0 && q.discount_factor < 1.5))
      throw Error(ErrorKind::Domain, "row " + std::to_string(line_no) + ": discount_factor outside (0, 1.5)");
    if (!(q.maturity_date > q.quote_date))
      throw Error(ErrorKind::Domain, "row " + std::to_string(line_no) + ": maturity_date must follow quote_date");
    quotes.push_back(std::move(q));
  }
  return quotes;
}

IngestResult build_node_diff_series(const std::vector<BondQuote>& quotes, Date short_maturity, Date long_maturity,
                                    DayCount) {
  if (!(short_maturity < long_maturity))
    throw Error(ErrorKind::Domain, "short maturity must precede long maturity");

  struct Quartet {
    std::optional<BondQuote> green_short, brown_short, green_long, brown_long;
    bool complete() const { return green_short && brown_short && green_long && brown_long; }
  };
  std::map<Date, Quartet> by_date;
  for (const auto& q : quotes) {
    auto& quartet = by_date[q.quote_date];
    std::optional<BondQuote>* slot = nullptr;
    if (q.maturity_date == short_maturity)
      slot = q.label == Label::Green ? &quartet.green_short : &quartet.brown_short;
    else if (q.maturity_date == long_maturity)
      slot = q.label == Label::Green ? &quartet.green_long : &quartet.brown_long;
    if (!slot) continue;
    if (slot->has_value())
      throw Error(ErrorKind::Parse, "duplicate quote for " + format_iso_date(q.quote_date) + " maturity " +
                                        format_iso_date(q.maturity_date));
    *slot = q;
  }

  IngestResult result;
  result.report.rows = quotes.size();
  result.report.dates_seen = by_date.size();
  auto& s = result.series;
  s.short_maturity = short_maturity;
  s.long_maturity = long_maturity;
  s.spacing_h = year_fraction(short_maturity, long_maturity);
  for (const auto& [date, quartet] : by_date) {
    if (!quartet.complete() || !(date < short_maturity)) {
      result.report.dropped_dates.push_back(date);
      continue;
    }
    double x = node_diff(greenium_point(*quartet.brown_short, *quartet.green_short),
                         greenium_point(*quartet.brown_long, *quartet.green_long));
    if (s.dates.empty()) s.t0 = date;
    s.dates.push_back(date);
    s.times.push_back(year_fraction(s.t0, date));
    s.values.push_back(x);
    s.effective_h.push_back(s.spacing_h);
  }
  result.report.dates_kept = s.values.size();
  if (s.values.empty()) throw Error(ErrorKind::EmptySeries, "no date has a complete green/brown short/long quartet");
  return result;
}

IngestResult ingest_quotes(const std::filesystem::path& csv_path, Date short_maturity, Date long_maturity,
                           DayCount day_count) {
  std::ifstream in(csv_path);
  if (!in) throw Error(ErrorKind::Io, "cannot open quotes file " + csv_path.string());
  return build_node_diff_series(read_quotes_csv(in), short_maturity, long_maturity, day_count);
}

void write_series_csv(std::ostream& out, const NodeDiffSeries& series) {
  validate_series(series);
  out << "date,t_years,x_value\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    Date d = series.dates.empty()
                 ? series.t0 + std::chrono::days{static_cast<long>(std::llround(365.0 * series.times[i]))}
                 : series.dates[i];
    out << format_iso_date(d) << ',' << format_number(series.times[i]) << ',' << format_number(series.values[i])
        << '\n';
  }
}

NodeDiffSeries read_series_csv(std::istream& in) {
  Header header = read_header(in);
  const std::size_t c_date = header.require("date");
  const std::size_t c_t = header.require("t_years");
  const std::size_t c_x = header.require("x_value");
  NodeDiffSeries s;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto f = split_csv(line);
    if (f.size() != header.index.size())
      throw Error(ErrorKind::Parse, "row " + std::to_string(line_no) + ": wrong field count");
    s.dates.push_back(parse_date_field(f[c_date], line_no, "date"));
    s.times.push_back(parse_double(f[c_t], line_no, "t_years"));
    s.values.push_back(parse_double(f[c_x], line_no, "x_value"));
  }
  if (s.values.empty()) throw Error(ErrorKind::EmptySeries, "series CSV has no rows");
  s.t0 = s.dates.front() - std::chrono::days{static_cast<long>(std::llround(365.0 * s.times.front()))};
  validate_series(s);
  return s;
}

void write_series_csv(const std::filesystem::path& path, const NodeDiffSeries& series) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  write_series_csv(out, series);
}

NodeDiffSeries read_series_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open series file " + path.string());
  return read_series_csv(in);
}

RegularizedSeries regularize_grid(const NodeDiffSeries& series, double min_coverage, int max_spacing_days) {
  validate_series(series);
  if (series.dates.empty()) throw Error(ErrorKind::Config, "grid regularization needs dated observations");
  std::map<Date, std::size_t> index;
  for (std::size_t i = 0; i < series.dates.size(); ++i) index.emplace(series.dates[i], i);
  const Date first = series.dates.front();
  const long span = (series.dates.back() - first).count();

  for (int spacing = 1; spacing <= max_spacing_days; ++spacing) {
    long nodes = span / spacing + 1;
    long hits = 0;
    for (long k = 0; k < nodes; ++k) hits += index.count(first + std::chrono::days{k * spacing});
    double coverage = static_cast<double>(hits) / static_cast<double>(nodes);
    if (coverage < min_coverage) continue;

    RegularizedSeries out;
    out.spacing_days = spacing;
    out.coverage = coverage;
    out.missing_nodes = static_cast<std::size_t>(nodes - hits);
    NodeDiffSeries& s = out.series;
    s.t0 = first;
    s.short_maturity = series.short_maturity;
    s.long_maturity = series.long_maturity;
    s.spacing_h = series.spacing_h;
    for (long k = 0; k < nodes; ++k) {
      Date d = first + std::chrono::days{k * spacing};
      auto it = index.find(d);
      if (it == index.end()) continue;
      s.dates.push_back(d);
      s.times.push_back(year_fraction(first, d));
      s.values.push_back(series.values[it->second]);
      if (!series.effective_h.empty()) s.effective_h.push_back(series.effective_h[it->second]);
    }
    return out;
  }
  throw Error(ErrorKind::EmptySeries, "no regular grid reaches the requested coverage");
}

NodeDiffSeries with_lattice_times(const NodeDiffSeries& series, double delta_bar) {
  if (!(delta_bar > 0.0)) throw Error(ErrorKind::Domain, "delta_bar must be positive");
  NodeDiffSeries s = series;
  for (std::size_t i = 0; i < s.times.size(); ++i) s.times[i] = static_cast<double>(i) * delta_bar;
  return s;
}

}  // namespace ttt
