#include "cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "ttt/dates.hpp"
#include "ttt/diagnostics.hpp"
#include "ttt/errors.hpp"
#include "ttt/infill.hpp"
#include "ttt/market_data.hpp"
#include "ttt/params_json.hpp"
#include "ttt/rdcm.hpp"
#include "ttt/rng.hpp"
#include "ttt/srdcm.hpp"

namespace ttt::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr int kExitOther = 1;
constexpr int kExitMissingColumn = 2;
constexpr int kExitEmptySeries = 3;
constexpr int kExitParse = 4;
constexpr int kExitConfig = 5;
constexpr int kExitFit = 6;
constexpr int kExitIo = 7;
constexpr int kExitBootstrap = 8;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingColumn: return kExitMissingColumn;
    case ErrorKind::EmptySeries: return kExitEmptySeries;
    case ErrorKind::Parse: return kExitParse;
    case ErrorKind::Config: return kExitConfig;
    case ErrorKind::Fit: return kExitFit;
    case ErrorKind::Io: return kExitIo;
    case ErrorKind::BootstrapFailure: return kExitBootstrap;
    default: return kExitOther;
  }
}

struct Common {
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string out;
};

fs::path sibling(const fs::path& out, const std::string& suffix) {
  return out.parent_path() / (out.stem().string() + suffix);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Config, "invalid JSON in " + path.string() + ": " + e.what());
  }
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buffer(1 << 16);
  while (in) {
    in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    EVP_DigestUpdate(ctx, buffer.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_DigestFinal_ex(ctx, digest, &length);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < length; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", digest[i]);
    hex += byte;
  }
  return hex;
}

std::string date_of(const NodeDiffSeries& series, std::size_t i) {
  if (i < series.dates.size()) return format_iso_date(series.dates[i]);
  return format_iso_date(series.t0 + std::chrono::days(std::llround(365.0 * series.times[i])));
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

// Bookkeeping shared by every command: resolved seed, inputs, outputs and
// the run manifest.
class Run {
 public:
  Run(std::string command, const Common& common, std::vector<std::string> args)
      : command_(std::move(command)), common_(common), args_(std::move(args)),
        start_(std::chrono::steady_clock::now()) {}

  // CLI flag > config value > freshly generated (recorded in the manifest).
  std::uint64_t seed(std::optional<std::uint64_t> from_config = std::nullopt) {
    if (!seed_) {
      if (common_.seed) {
        seed_ = *common_.seed;
      } else if (from_config) {
        seed_ = *from_config;
      } else {
        std::random_device device;
        seed_ = (static_cast<std::uint64_t>(device()) << 32) ^ device();
        generated_ = true;
      }
    }
    return *seed_;
  }

  int threads(std::optional<int> from_config = std::nullopt) const {
    if (common_.threads > 0 && threads_flag_) return common_.threads;
    return from_config.value_or(common_.threads);
  }
  void mark_threads_flag(bool given) { threads_flag_ = given; }

  void input(const fs::path& path) { inputs_.push_back({{"path", path.string()}, {"sha256", sha256_file(path)}}); }
  void output(const fs::path& path) { outputs_.push_back(path.string()); }
  json& config() { return config_; }

  void write_manifest(const fs::path& path, const json* error) {
    json m;
    m["command"] = command_;
    m["version"] = TTT_VERSION;
    m["args"] = args_;
    m["config"] = config_;
    m["seed"] = seed_ ? json(*seed_) : json(nullptr);
    m["seed_generated"] = generated_;
    m["threads"] = common_.threads;
    m["inputs"] = inputs_;
    m["outputs"] = outputs_;
    m["wall_time_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    m["status"] = error ? "error" : "ok";
    if (error) m["error"] = (*error)["error"];
    write_json(path, m);
  }

 private:
  std::string command_;
  Common common_;
  std::vector<std::string> args_;
  std::chrono::steady_clock::time_point start_;
  std::optional<std::uint64_t> seed_;
  bool generated_ = false;
  bool threads_flag_ = false;
  json config_ = json::object();
  json inputs_ = json::array();
  std::vector<std::string> outputs_;
};

json error_body(ErrorKind kind, const std::string& message) {
  return {{"error", {{"kind", std::string(to_string(kind))}, {"message", message}}}};
}

json params_block(const ParamVector& est, const std::vector<ParameterSpread>* sd, std::size_t offset,
                  const ParamMask* fixed) {
  json out = json::object();
  for (std::size_t k = 0; k < kParamCount; ++k) {
    json entry = {{"est", est[k]}};
    if (sd) entry["sd"] = (*sd)[offset + k].sd;
    if (fixed) entry["fixed"] = (*fixed)[k];
    out[std::string(param_name(k))] = entry;
  }
  return out;
}

json bootstrap_json(const BootstrapReport& b) {
  return {{"n_replications", b.n_replications}, {"n_used", b.n_used},           {"failures", b.failures},
          {"seed", b.seed},                     {"single_replication", b.single_replication}};
}

json rdcm_fit_json(const RdcmFit& fit, std::optional<Date> epoch, const BootstrapReport* boot) {
  json j;
  j["model"] = "rdcm";
  j["converged"] = fit.report.converged;
  j["loglik"] = fit.loglik;
  j["aic"] = fit.aic;
  j["k"] = fit.free_parameters();
  j["params"] = params_block(to_vector(fit.params), boot ? &boot->parameters : nullptr, 0, &fit.fixed_mask);
  j["tau"] = fit.params.tau;
  j["deadline_T"] = fit.params.deadline_T;
  j["fixed_mask"] = mask_to_json(fit.fixed_mask);
  j["on_boundary"] = mask_to_json(fit.on_boundary);
  j["warnings"] = fit.warnings;
  json traces = json::array();
  for (const auto& t : fit.report.traces) {
    traces.push_back({{"start", std::vector<double>(t.start.begin(), t.start.end())},
                      {"end", std::vector<double>(t.end.begin(), t.end.end())},
                      {"loglik", t.loglik},
                      {"iterations", t.iterations},
                      {"evaluations", t.evaluations},
                      {"converged", t.converged}});
  }
  j["optimizer"] = {{"iterations", fit.report.iterations}, {"evaluations", fit.report.evaluations}, {"traces", traces}};
  j["fitted"] = rdcm_to_json(fit.params, epoch);
  if (boot) j["bootstrap"] = bootstrap_json(*boot);
  return j;
}

// Accepts raw parameter JSON or a fit report carrying a "fitted" block.
json unwrap_fitted(const json& j) { return j.contains("fitted") ? j["fitted"] : j; }

OptimizerConfig optimizer_from_json(const json& j, OptimizerConfig base) {
  if (!j.is_object()) return base;
  base.starts = j.value("starts", base.starts);
  base.max_restarts = j.value("max_restarts", base.max_restarts);
  base.max_iter = j.value("max_iter", base.max_iter);
  base.rel_tol = j.value("rel_tol", base.rel_tol);
  base.warm_start = j.value("warm_start", base.warm_start);
  return base;
}

EmConfig em_from_json(const json& j, EmConfig base) {
  if (!j.is_object()) return base;
  base.max_iter = j.value("max_iter", base.max_iter);
  base.tol = j.value("tol", base.tol);
  base.m_step_max_evals = j.value("m_step_max_evals", base.m_step_max_evals);
  base.m_step_rel_tol = j.value("m_step_rel_tol", base.m_step_rel_tol);
  base.collapse_eps = j.value("collapse_eps", base.collapse_eps);
  return base;
}

// ---- commands ----

void cmd_ingest(Run& run, const Common& common, const std::string& quotes, const std::string& short_date,
                const std::string& long_date, bool regularize, double min_coverage) {
  run.config() = {{"quotes", quotes}, {"short", short_date}, {"long", long_date}, {"regularize", regularize},
                  {"min_coverage", min_coverage}};
  run.input(quotes);
  IngestResult result = ingest_quotes(quotes, parse_iso_date(short_date), parse_iso_date(long_date));
  json report;
  report["rows"] = result.report.rows;
  report["dates_seen"] = result.report.dates_seen;
  report["dates_kept"] = result.report.dates_kept;
  json dropped = json::array();
  for (Date d : result.report.dropped_dates) dropped.push_back(format_iso_date(d));
  report["dropped_dates"] = dropped;
  NodeDiffSeries series = std::move(result.series);
  if (regularize) {
    RegularizedSeries reg = regularize_grid(series, min_coverage);
    report["regularized"] = {{"spacing_days", reg.spacing_days},
                             {"coverage", reg.coverage},
                             {"missing_nodes", reg.missing_nodes}};
    series = std::move(reg.series);
  }
  report["n_observations"] = series.size();
  report["epoch"] = format_iso_date(series.t0);
  report["spacing_h"] = series.spacing_h;
  const fs::path out = common.out;
  write_series_csv(out, series);
  run.output(out);
  const fs::path report_path = sibling(out, ".report.json");
  write_json(report_path, report);
  run.output(report_path);
}

void cmd_fit(Run& run, const Common& common, const std::string& model, const std::string& series_path,
             const std::string& config_path, std::optional<int> bootstrap_flag) {
  run.input(series_path);
  run.input(config_path);
  const json config = read_json_file(config_path);
  run.config() = {{"model", model}, {"series", series_path}, {"config", config}};
  const NodeDiffSeries series = read_series_csv(fs::path(series_path));
  const std::optional<Date> epoch = series.t0;
  const int bootstrap_n = bootstrap_flag.value_or(config.value("bootstrap_n", 0));
  if (bootstrap_n < 0) throw Error(ErrorKind::Config, "bootstrap_n must be >= 0");
  const std::uint64_t seed = run.seed(config.contains("seed") ? std::optional(config["seed"].get<std::uint64_t>())
                                                                : std::nullopt);
  const int threads = run.threads(config.contains("threads") ? std::optional(config["threads"].get<int>()) : std::nullopt);
  const fs::path out = common.out;

  json report;
  if (model == "rdcm") {
    const RdcmParams frame = rdcm_from_json(config.contains("params") ? config["params"] : config, epoch);
    const ParamBox box = config.contains("box") ? box_from_json(config["box"]) : ParamBox{};
    std::optional<ParamMask> mask;
    if (config.contains("fixed")) mask = mask_from_json(config["fixed"]);
    OptimizerConfig opt = optimizer_from_json(config.value("optimizer", json::object()), {});
    opt.seed = seed;
    opt.threads = threads;
    RdcmFit fit;
    try {
      fit = fit_rdcm(series, frame, box, mask, opt);
    } catch (const FitError& e) {
      json body = error_body(ErrorKind::Fit, e.what());
      body["best"] = rdcm_fit_json(e.best(), epoch, nullptr);
      write_json(out, body);
      run.output(out);
      throw;
    }
    std::optional<BootstrapReport> boot;
    if (bootstrap_n > 0) {
      RdcmBootstrapConfig bc;
      bc.box = box;
      bc.optimizer.max_iter = opt.max_iter;
      bc.optimizer.rel_tol = opt.rel_tol;
      boot = bootstrap_rdcm(fit, series.times, series.values.front(), static_cast<std::size_t>(bootstrap_n),
                            stream_seed(seed, 1), bc, threads);
    }
    report = rdcm_fit_json(fit, epoch, boot ? &*boot : nullptr);
  } else if (model == "srdcm") {
    EmConfig em = em_from_json(config.value("em", json::object()), {});
    em.threads = threads;
    if (config.contains("box")) em.box = box_from_json(config["box"]);
    if (config.contains("fixed")) {
      for (const auto& m : config["fixed"]) em.fixed_masks.push_back(mask_from_json(m));
    }
    EmResult res;
    if (config.contains("init")) {
      res = em_fit(series, srdcm_from_json(config["init"], epoch), em);
    } else {
      if (!config.contains("frames")) throw Error(ErrorKind::Config, "srdcm config needs 'frames' or 'init'");
      std::vector<RdcmParams> frames;
      for (const auto& f : config["frames"]) frames.push_back(rdcm_from_json(f, epoch));
      SrdcmFitConfig fc;
      fc.restarts = config.value("restarts", fc.restarts);
      fc.short_iterations = config.value("short_iterations", fc.short_iterations);
      fc.rolling_window = config.value("rolling_window", fc.rolling_window);
      fc.seed = seed;
      fc.em = em;
      res = fit_srdcm(series, frames, config.value("delta_bar", 1.0 / 252.0), fc);
    }
    std::vector<ParamMask> masks = em.fixed_masks;
    if (masks.empty())
      for (const auto& r : res.params.regimes) masks.push_back(default_fixed_mask(series, r));
    const int k = srdcm_parameter_count(res.params, masks);
    const double loglik = res.filter.log_marginal;
    std::optional<BootstrapReport> boot;
    if (bootstrap_n > 0) {
      EmConfig bem = em;
      bem.fixed_masks = masks;
      boot = bootstrap_srdcm(res.params, series.values.front(), series.times.front(), series.size() - 1,
                             static_cast<std::size_t>(bootstrap_n), stream_seed(seed, 1), bem, threads);
    }
    report["model"] = "srdcm";
    report["converged"] = res.converged;
    report["iterations"] = res.iterations;
    report["loglik"] = loglik;
    report["aic"] = aic(loglik, k);
    report["k"] = k;
    const std::size_t m = res.params.regime_count();
    json regimes = json::array();
    for (std::size_t j = 0; j < m; ++j) {
      json r;
      r["params"] = params_block(to_vector(res.params.regimes[j]), boot ? &boot->parameters : nullptr,
                                 j * kParamCount, &masks[j]);
      r["tau"] = res.params.regimes[j].tau;
      r["deadline_T"] = res.params.regimes[j].deadline_T;
      regimes.push_back(r);
    }
    report["regimes"] = regimes;
    report["pi0"] = std::vector<double>(res.params.pi0.data(), res.params.pi0.data() + res.params.pi0.size());
    json p = {{"est", matrix_to_json(res.params.trans_P)}};
    if (boot) {
      Eigen::MatrixXd sd(m, m);
      for (std::size_t h = 0; h < m; ++h)
        for (std::size_t c = 0; c < m; ++c) sd(h, c) = boot->parameters[m * kParamCount + h * m + c].sd;
      p["sd"] = matrix_to_json(sd);
    }
    report["trans_P"] = p;
    report["log_marginals"] = res.log_marginals;
    report["warnings"] = res.warnings;
    report["fitted"] = srdcm_to_json(res.params, epoch);
    if (boot) report["bootstrap"] = bootstrap_json(*boot);
  } else {
    throw Error(ErrorKind::Config, "unknown model '" + model + "' (expected rdcm or srdcm)");
  }
  write_json(out, report);
  run.output(out);
}

void cmd_decode(Run& run, const Common& common, const std::string& params_path, const std::string& series_path,
                double strong, double weak) {
  run.input(params_path);
  run.input(series_path);
  run.config() = {{"params", params_path}, {"series", series_path}, {"strong", strong}, {"weak", weak}};
  if (!(weak <= strong)) throw Error(ErrorKind::Config, "weak threshold must not exceed the strong threshold");
  const NodeDiffSeries series = read_series_csv(fs::path(series_path));
  const SrdcmParams params = srdcm_from_json(unwrap_fitted(read_json_file(params_path)), series.t0);
  FilterOptions options;
  options.allow_zero_transitions = true;
  const FilterState filter = forward_backward(series, params, options);
  const DecodedPath decoded = local_decode(filter);
  std::ostringstream csv;
  csv << "date,regime,gamma_max,band\n";
  std::vector<std::size_t> counts(params.regime_count(), 0);
  for (std::size_t r = 0; r < decoded.regime_indices.size(); ++r) {
    const double g = decoded.max_posteriors[r];
    const char* band = g >= strong ? "strong" : (g >= weak ? "weak" : "none");
    csv << date_of(series, r) << ',' << decoded.regime_indices[r] + 1 << ',' << fmt(g) << ',' << band << '\n';
    ++counts[decoded.regime_indices[r]];
  }
  const fs::path out = common.out;
  write_text(out, csv.str());
  run.output(out);
  const fs::path report_path = sibling(out, ".report.json");
  write_json(report_path, {{"log_marginal", filter.log_marginal},
                           {"rows", decoded.regime_indices.size()},
                           {"regime_counts", counts},
                           {"thresholds", {{"strong", strong}, {"weak", weak}}}});
  run.output(report_path);
}

void cmd_residuals(Run& run, const Common& common, const std::string& model, const std::string& params_path,
                   const std::string& series_path) {
  run.input(params_path);
  run.input(series_path);
  run.config() = {{"model", model}, {"params", params_path}, {"series", series_path}};
  const NodeDiffSeries series = read_series_csv(fs::path(series_path));
  const json pj = unwrap_fitted(read_json_file(params_path));
  std::vector<double> z;
  if (model == "rdcm") {
    z = rdcm_residuals(series, rdcm_from_json(pj, series.t0));
  } else if (model == "srdcm") {
    const SrdcmParams params = srdcm_from_json(pj, series.t0);
    FilterOptions options;
    options.allow_zero_transitions = true;
    z = srdcm_residuals(series, params, local_decode(forward_backward(series, params, options)));
  } else {
    throw Error(ErrorKind::Config, "unknown model '" + model + "' (expected rdcm or srdcm)");
  }
  std::ostringstream csv;
  csv << "date,t_years,residual\n";
  for (std::size_t i = 0; i < z.size(); ++i)
    csv << date_of(series, i + 1) << ',' << fmt(series.times[i + 1]) << ',' << fmt(z[i]) << '\n';
  const fs::path out = common.out;
  write_text(out, csv.str());
  run.output(out);
  const KsResult ks = ks_normal(z);
  const fs::path ks_path = sibling(out, ".ks.json");
  write_json(ks_path, {{"model", model}, {"D", ks.statistic_D}, {"p_value", ks.p_value}, {"n", ks.n}});
  run.output(ks_path);
}

void cmd_simulate(Run& run, const Common& common, const std::string& model, const std::string& params_path,
                  double x0, std::size_t n_steps, double delta, double t_start, const std::string& start_date) {
  run.input(params_path);
  const std::uint64_t seed = run.seed();
  run.config() = {{"model", model}, {"params", params_path}, {"x0", x0},           {"n_steps", n_steps},
                  {"delta", delta}, {"t_start", t_start},    {"start_date", start_date}};
  if (n_steps < 1) throw Error(ErrorKind::Config, "n_steps must be >= 1");
  const Date epoch = parse_iso_date(start_date);
  const json pj = unwrap_fitted(read_json_file(params_path));
  NodeDiffSeries series;
  series.t0 = epoch;
  const fs::path out = common.out;
  json report = {{"model", model}, {"n_steps", n_steps}, {"x0", x0}, {"seed", seed}};
  if (model == "rdcm") {
    const RdcmParams params = rdcm_from_json(pj, epoch);
    std::vector<double> grid(n_steps + 1);
    for (std::size_t i = 0; i <= n_steps; ++i) grid[i] = t_start + static_cast<double>(i) * delta;
    series.values = simulate_path(params, x0, grid, seed);
    series.times = std::move(grid);
  } else if (model == "srdcm") {
    SrdcmParams params = srdcm_from_json(pj, epoch);
    if (delta != params.delta_bar) params.delta_bar = delta;
    SrdcmSimulation sim = simulate_srdcm(params, x0, t_start, n_steps, seed);
    series.times = sim.times;
    series.values = sim.path;
    std::ostringstream csv;
    csv << "date,t_years,regime\n";
    for (std::size_t i = 0; i < sim.regime_path.size(); ++i)
      csv << date_of(series, i) << ',' << fmt(series.times[i]) << ',' << sim.regime_path[i] + 1 << '\n';
    const fs::path regimes_path = sibling(out, ".regimes.csv");
    write_text(regimes_path, csv.str());
    run.output(regimes_path);
  } else {
    throw Error(ErrorKind::Config, "unknown model '" + model + "' (expected rdcm or srdcm)");
  }
  report["final_value"] = series.values.back();
  write_series_csv(out, series);
  run.output(out);
  const fs::path report_path = sibling(out, ".report.json");
  write_json(report_path, report);
  run.output(report_path);
}

Theta theta_from_json(const json& j) {
  if (j.is_array() && j.size() == 2) return {j[0].get<double>(), j[1].get<double>()};
  return {j.at("minus").get<double>(), j.at("plus").get<double>()};
}

ThetaBox theta_box_from_json(const json& j) {
  ThetaBox box;
  if (j.contains("lower")) box.lower = theta_from_json(j["lower"]);
  if (j.contains("upper")) box.upper = theta_from_json(j["upper"]);
  return box;
}

// Generator from a one-step transition matrix: Q = log(P) / delta.
Eigen::MatrixXd generator_from_transition(const Eigen::MatrixXd& P, double delta) {
  Eigen::MatrixXd Q = P.log() / delta;
  for (Eigen::Index h = 0; h < Q.rows(); ++h) {
    for (Eigen::Index k = 0; k < Q.cols(); ++k)
      if (h != k && !(Q(h, k) > 0)) throw Error(ErrorKind::Config, "transition matrix has no valid generator");
    Q(h, h) = -(Q.row(h).sum() - Q(h, h));
  }
  return Q;
}

json summary_json(const InfillReport& report) {
  json j;
  j["model"] = report.model;
  if (!report.mode.empty()) j["mode"] = report.mode;
  j["seed"] = report.seed;
  j["n_paths"] = report.n_paths;
  j["optimizer_failures"] = report.optimizer_failures;
  j["data_flatness_max"] = report.data_flatness_max;
  j["endpoint_variation_max_scaled"] = report.endpoint_variation_max_scaled;
  j["switch_cell_checks"] = report.switch_cell_checks;
  json rows = json::array();
  for (const auto& s : report.summary) {
    rows.push_back({{"n", s.n},
                    {"component", s.component},
                    {"visible", s.visible},
                    {"count", s.count},
                    {"median_abs_error", s.median_abs_error},
                    {"sd_estimate", s.sd_estimate},
                    {"iqr_estimate", s.iqr_estimate},
                    {"median_sup_gap", s.median_sup_gap}});
  }
  j["summary"] = rows;
  return j;
}

void cmd_infill(Run& run, const Common& common, const std::string& config_path, bool conditional_flag) {
  run.input(config_path);
  const json config = read_json_file(config_path);
  run.config() = {{"config", config}, {"conditional", conditional_flag}};
  const std::uint64_t seed = run.seed(config.contains("seed") ? std::optional(config["seed"].get<std::uint64_t>())
                                                                : std::nullopt);
  const int threads = run.threads(config.contains("threads") ? std::optional(config["threads"].get<int>()) : std::nullopt);
  if (!config.contains("frames") || !config["frames"].is_array() || config["frames"].empty())
    throw Error(ErrorKind::Config, "infill config needs a non-empty 'frames' array");
  if (!config.contains("theta0")) throw Error(ErrorKind::Config, "infill config needs 'theta0'");

  std::vector<Theta> theta0;
  if (config["theta0"].is_array() && !config["theta0"].empty() && config["theta0"][0].is_object()) {
    for (const auto& t : config["theta0"]) theta0.push_back(theta_from_json(t));
  } else if (config["theta0"].is_array() && !config["theta0"].empty() && config["theta0"][0].is_array()) {
    for (const auto& t : config["theta0"]) theta0.push_back(theta_from_json(t));
  } else {
    theta0.push_back(theta_from_json(config["theta0"]));
  }
  std::vector<RdcmParams> frames;
  for (const auto& f : config["frames"]) frames.push_back(rdcm_from_json(f));
  if (frames.size() != theta0.size()) throw Error(ErrorKind::Config, "theta0 and frames must have the same length");
  std::vector<RdcmParams> truth;
  for (std::size_t j = 0; j < frames.size(); ++j) truth.push_back(with_theta(frames[j], theta0[j]));
  std::optional<std::vector<RdcmParams>> fit_frames;
  if (config.contains("fit_frames")) {
    fit_frames.emplace();
    for (const auto& f : config["fit_frames"]) fit_frames->push_back(rdcm_from_json(f));
    if (fit_frames->size() != truth.size()) throw Error(ErrorKind::Config, "fit_frames must match frames");
  }

  const std::string model = config.value("model", truth.size() > 1 || config.contains("Q") || config.contains("P")
                                                      ? std::string("switching")
                                                      : std::string("rdcm"));
  const auto n_list = config.value("n_list", std::vector<std::size_t>{250, 500, 1000, 2000, 4000});
  const std::size_t n_reps = config.value("n_reps", std::size_t{100});
  const ThetaBox box = config.contains("box") ? theta_box_from_json(config["box"]) : ThetaBox{};
  const int grid_points = config.value("grid_points", 41);

  InfillReport report;
  if (model == "rdcm") {
    if (truth.size() != 1) throw Error(ErrorKind::Config, "rdcm infill takes exactly one frame");
    RdcmInfillConfig rc;
    rc.truth = truth[0];
    if (fit_frames) rc.fit_frame = (*fit_frames)[0];
    rc.x0 = config.value("x0", rc.x0);
    rc.t0 = config.value("t0", rc.t0);
    rc.l = config.at("l").get<double>();
    rc.n_list = n_list;
    rc.n_reps = n_reps;
    rc.seed = seed;
    rc.threads = threads;
    rc.box = box;
    rc.grid_points = grid_points;
    report = rdcm_consistency_experiment(rc);
  } else if (model == "switching") {
    SwitchingInfillConfig sc;
    sc.truth = truth;
    sc.fit_frames = fit_frames;
    if (config.contains("Q")) {
      sc.Q = matrix_from_json(config["Q"]);
    } else if (config.contains("P")) {
      sc.Q = generator_from_transition(matrix_from_json(config["P"]), config.value("P_delta", 1.0 / 252.0));
    } else {
      throw Error(ErrorKind::Config, "switching infill needs 'Q' or 'P'");
    }
    sc.x0 = config.value("x0", sc.x0);
    sc.t0 = config.value("t0", sc.t0);
    sc.l = config.at("l").get<double>();
    sc.n_list = n_list;
    sc.n_reps = n_reps;
    sc.n_paths = config.value("n_paths", sc.n_paths);
    const std::string mode = conditional_flag ? "conditional" : config.value("mode", std::string("marginal"));
    if (mode == "conditional")
      sc.mode = SwitchingMode::Conditional;
    else if (mode == "marginal")
      sc.mode = SwitchingMode::Marginal;
    else
      throw Error(ErrorKind::Config, "mode must be 'marginal' or 'conditional'");
    sc.seed = seed;
    sc.threads = threads;
    sc.box = box;
    sc.grid_points = grid_points;
    sc.marginal_start_points = config.value("marginal_start_points", sc.marginal_start_points);
    report = switching_consistency_experiment(sc);
  } else {
    throw Error(ErrorKind::Config, "model must be 'rdcm' or 'switching'");
  }
  const fs::path out = common.out;
  write_text(out, infill_csv(report));
  run.output(out);
  const fs::path summary_path = sibling(out, ".summary.json");
  write_json(summary_path, summary_json(report));
  run.output(summary_path);
}

void add_common(CLI::App* sub, Common& common, bool needs_seed) {
  if (needs_seed) sub->add_option("--seed", common.seed, "Master seed (generated and recorded when absent)");
  sub->add_option("--threads", common.threads, "Worker threads")->check(CLI::PositiveNumber);
  sub->add_option("--out", common.out, "Primary output path")->required();
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Time-to-transition signal extraction and deadline-constrained bridge models", "ttt"};
  app.require_subcommand(1);
  app.set_version_flag("--version", TTT_VERSION);
  Common common;

  std::string quotes, short_date, long_date;
  bool regularize = false;
  double min_coverage = 0.95;
  auto* ingest = app.add_subcommand("ingest", "Build the node-difference series from twin-bond quotes");
  ingest->add_option("--quotes", quotes, "Quotes CSV")->required();
  ingest->add_option("--short", short_date, "Short node maturity (YYYY-MM-DD)")->required();
  ingest->add_option("--long", long_date, "Long node maturity (YYYY-MM-DD)")->required();
  ingest->add_flag("--regularize", regularize, "Subsample onto the finest well-covered calendar grid");
  ingest->add_option("--min-coverage", min_coverage, "Coverage required by --regularize");
  add_common(ingest, common, false);

  std::string model = "rdcm", series_path, config_path, params_path;
  std::optional<int> bootstrap_n;
  auto* fit = app.add_subcommand("fit", "Calibrate a single-regime or switching model");
  fit->add_option("--model", model, "rdcm or srdcm");
  fit->add_option("--series", series_path, "Series CSV")->required();
  fit->add_option("--config", config_path, "Fit configuration JSON")->required();
  fit->add_option("--bootstrap", bootstrap_n, "Parametric bootstrap replications (0 = none)");
  add_common(fit, common, true);

  double strong = 0.75, weak = 0.5;
  auto* decode = app.add_subcommand("decode", "Local decoding of the regime path");
  decode->add_option("--params", params_path, "Switching model JSON (or fit report)")->required();
  decode->add_option("--series", series_path, "Series CSV")->required();
  decode->add_option("--strong", strong, "Posterior threshold of the strong band");
  decode->add_option("--weak", weak, "Posterior threshold of the weak band");
  add_common(decode, common, false);

  auto* residuals = app.add_subcommand("residuals", "Filtered residuals and KS normality test");
  residuals->add_option("--model", model, "rdcm or srdcm");
  residuals->add_option("--params", params_path, "Model JSON (or fit report)")->required();
  residuals->add_option("--series", series_path, "Series CSV")->required();
  add_common(residuals, common, false);

  double x0 = 0.0, delta = 1.0 / 252.0, t_start = 0.0;
  std::size_t n_steps = 0;
  std::string start_date = "2000-01-03";
  auto* simulate = app.add_subcommand("simulate", "Simulate a series from a model");
  simulate->add_option("--model", model, "rdcm or srdcm");
  simulate->add_option("--params", params_path, "Model JSON (or fit report)")->required();
  simulate->add_option("--x0", x0, "Initial value");
  simulate->add_option("--n-steps", n_steps, "Number of steps")->required();
  simulate->add_option("--delta", delta, "Step length in years");
  simulate->add_option("--t-start", t_start, "Start time in years from the epoch");
  simulate->add_option("--start-date", start_date, "Epoch date of the output series");
  add_common(simulate, common, true);

  bool conditional = false;
  auto* infill = app.add_subcommand("infill", "Fixed-horizon infill consistency experiment");
  infill->add_option("--config", config_path, "Experiment configuration JSON")->required();
  infill->add_flag("--conditional", conditional, "Use the true-path conditional contrast");
  add_common(infill, common, true);

  std::vector<std::string> reversed(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(reversed.begin(), reversed.end());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  CLI::App* chosen = app.get_subcommands().front();
  const std::string command = chosen->get_name();
  Run run(command, common, args);
  run.mark_threads_flag(chosen->count("--threads") > 0);
  const fs::path out = common.out;
  const fs::path manifest_path = sibling(out, ".manifest.json");
  const fs::path error_path = command == "fit" ? out : sibling(out, ".error.json");

  auto fail = [&](ErrorKind kind, const std::string& message, bool write_body) {
    json body = error_body(kind, message);
    std::cerr << "ttt " << command << ": " << to_string(kind) << ": " << message << "\n";
    try {
      if (write_body) {
        write_json(error_path, body);
        run.output(error_path);
      }
      run.write_manifest(manifest_path, &body);
    } catch (const std::exception& e) {
      std::cerr << "ttt " << command << ": could not record the failure: " << e.what() << "\n";
    }
    return exit_code(kind);
  };

  try {
    if (command == "ingest")
      cmd_ingest(run, common, quotes, short_date, long_date, regularize, min_coverage);
    else if (command == "fit")
      cmd_fit(run, common, model, series_path, config_path, bootstrap_n);
    else if (command == "decode")
      cmd_decode(run, common, params_path, series_path, strong, weak);
    else if (command == "residuals")
      cmd_residuals(run, common, model, params_path, series_path);
    else if (command == "simulate")
      cmd_simulate(run, common, model, params_path, x0, n_steps, delta, t_start, start_date);
    else if (command == "infill")
      cmd_infill(run, common, config_path, conditional);
    run.write_manifest(manifest_path, nullptr);
  } catch (const FitError& e) {
    return fail(ErrorKind::Fit, e.what(), false);  // the body with the best fit is already written
  } catch (const Error& e) {
    return fail(e.kind(), e.what(), true);
  } catch (const json::exception& e) {
    return fail(ErrorKind::Config, e.what(), true);
  } catch (const std::exception& e) {
    return fail(ErrorKind::InternalContract, e.what(), true);
  }
  return 0;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args);
}

}  // namespace ttt::cli
