#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace ttt {

using Date = std::chrono::sys_days;

// Strict YYYY-MM-DD. Throws Error(Parse) on anything else.
Date parse_iso_date(std::string_view text);
std::string format_iso_date(Date d);

// ACT/365 fixed.
double year_fraction(Date from, Date to);

bool is_weekday(Date d);
Date add_business_days(Date start, long count);

}  // namespace ttt
