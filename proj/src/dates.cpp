#include "ttt/dates.hpp"

#include <cstdio>

#include "ttt/errors.hpp"

namespace ttt {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Alignment: return "alignment";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::MissingColumn: return "missing_column";
    case ErrorKind::EmptySeries: return "empty_series";
    case ErrorKind::Ordering: return "ordering";
    case ErrorKind::Range: return "range";
    case ErrorKind::DegenerateBridge: return "degenerate_bridge";
    case ErrorKind::NumericDegeneracy: return "numeric_degeneracy";
    case ErrorKind::Propagation: return "propagation";
    case ErrorKind::Fit: return "fit";
    case ErrorKind::InternalContract: return "internal_contract";
    case ErrorKind::SampleSize: return "sample_size";
    case ErrorKind::BootstrapFailure: return "bootstrap_failure";
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

namespace {

bool all_digits(std::string_view s) {
  for (char c : s)
    if (c < '0' || c > '9') return false;
  return !s.empty();
}

int to_int(std::string_view s) {
  int v = 0;
  for (char c : s) v = v * 10 + (c - '0');
  return v;
}

}  // namespace

Date parse_iso_date(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-' || !all_digits(text.substr(0, 4)) ||
      !all_digits(text.substr(5, 2)) || !all_digits(text.substr(8, 2)))
    throw Error(ErrorKind::Parse, "invalid ISO-8601 date '" + std::string(text) + "'");
  using namespace std::chrono;
  year_month_day ymd{year{to_int(text.substr(0, 4))}, month{static_cast<unsigned>(to_int(text.substr(5, 2)))},
                     day{static_cast<unsigned>(to_int(text.substr(8, 2)))}};
  if (!ymd.ok()) throw Error(ErrorKind::Parse, "invalid calendar date '" + std::string(text) + "'");
  return sys_days{ymd};
}

std::string format_iso_date(Date d) {
  using namespace std::chrono;
  year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

double year_fraction(Date from, Date to) { return static_cast<double>((to - from).count()) / 365.0; }

bool is_weekday(Date d) {
  std::chrono::weekday wd{d};
  return wd != std::chrono::Saturday && wd != std::chrono::Sunday;
}

Date add_business_days(Date start, long count) {
  Date d = start;
  while (count > 0) {
    d += std::chrono::days{1};
    if (is_weekday(d)) --count;
  }
  return d;
}

}  // namespace ttt
