#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ttt/dates.hpp"

namespace ttt {

enum class Label { Green, Brown };

struct BondQuote {
  Date quote_date;
  std::string isin;
  Label label;
  Date maturity_date;
  double discount_factor;
};

struct GreeniumPoint {
  Date quote_date;
  Date maturity_date;
  double greenium;  // annualized yield difference brown minus green
};

// Observations of the cross-maturity greenium difference X_t. Only `times`
// and `values` are required by the models; the remaining fields describe
// where the series came from and may be empty for synthetic data.
struct NodeDiffSeries {
  Date t0{};                       // epoch; times are year fractions from it
  std::vector<double> times;       // strictly increasing
  std::vector<double> values;      // X_t
  std::vector<Date> dates;         // empty or one per observation
  Date short_maturity{};
  Date long_maturity{};
  double spacing_h = 0.0;          // long - short maturity, years
  std::vector<double> effective_h; // per observation, as reported

  std::size_t size() const { return values.size(); }
};

// Throws Error(Ordering/Domain) when times are not strictly increasing or
// sizes disagree.
void validate_series(const NodeDiffSeries& series);

// -(ln D_b - ln D_g) / (T - t).
double greenium(double discount_brown, double discount_green, double time_to_maturity);

GreeniumPoint greenium_point(const BondQuote& brown, const BondQuote& green);

// short.greenium - long.greenium.
double node_diff(const GreeniumPoint& short_point, const GreeniumPoint& long_point);

enum class DayCount { Act365Fixed };

struct IngestReport {
  std::size_t rows = 0;
  std::size_t dates_seen = 0;
  std::size_t dates_kept = 0;
  std::vector<Date> dropped_dates;  // incomplete green/brown x short/long quartets
};

struct IngestResult {
  NodeDiffSeries series;
  IngestReport report;
};

std::vector<BondQuote> read_quotes_csv(std::istream& in);

IngestResult build_node_diff_series(const std::vector<BondQuote>& quotes, Date short_maturity, Date long_maturity,
                                    DayCount day_count = DayCount::Act365Fixed);

IngestResult ingest_quotes(const std::filesystem::path& csv_path, Date short_maturity, Date long_maturity,
                           DayCount day_count = DayCount::Act365Fixed);

// Series CSV: `date,t_years,x_value`, 12 significant digits. Synthetic series
// without dates get t0 + round(365 * t) as the date column.
void write_series_csv(std::ostream& out, const NodeDiffSeries& series);
NodeDiffSeries read_series_csv(std::istream& in);
void write_series_csv(const std::filesystem::path& path, const NodeDiffSeries& series);
NodeDiffSeries read_series_csv(const std::filesystem::path& path);

struct RegularizedSeries {
  NodeDiffSeries series;
  int spacing_days = 0;
  double coverage = 0.0;           // fraction of grid nodes with an observation
  std::size_t missing_nodes = 0;   // grid nodes dropped for lack of data
};

// Picks the finest calendar spacing (1..max_spacing_days days, anchored at the
// first date) whose grid nodes carry an observation at least `min_coverage`
// of the time, and subsamples the series onto those nodes. Nodes without
// data are dropped and counted, never interpolated.
RegularizedSeries regularize_grid(const NodeDiffSeries& series, double min_coverage = 0.95,
                                  int max_spacing_days = 31);

// Copy of the series with times replaced by the lattice t0 + i * delta_bar.
NodeDiffSeries with_lattice_times(const NodeDiffSeries& series, double delta_bar);

}  // namespace ttt
