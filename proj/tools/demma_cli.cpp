// demma: command-line front end.
//
//   demma scan         threshold stability scan -> scan JSON + candidate TSV
//   demma fit-mixture  zero/log-normal/GP mixture fit -> mixture JSON + diagnostics
//   demma simulate     synthetic predictor/target CSV from a mixture
//   demma train        fit the forecasting network -> model JSON + epoch log
//   demma predict      per-window quantile and value predictions -> CSV
//   demma evaluate     RMSE by region -> metrics JSON
//   demma gradcheck    finite-difference check of the full objective
//
// Exit status: 0 ok, 1 usage, 2 data, 3 numerical.

#include <cstdint>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "demma/data_io.hpp"
#include "demma/error.hpp"
#include "demma/mixture.hpp"
#include "demma/pipeline.hpp"
#include "demma/serialization.hpp"
#include "demma/threshold_scan.hpp"

namespace {

using namespace demma;

void echo_config(const Json& cfg) { std::cout << "config " << cfg.dump() << '\n'; }

void warn(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IngestionError("cannot write '" + path + "'");
  return os;
}

// foo.json -> foo<suffix>; anything else -> path<suffix>
std::string sibling(const std::string& path, const std::string& suffix) {
  const std::string ext = ".json";
  if (path.size() > ext.size() && path.compare(path.size() - ext.size(), ext.size(), ext) == 0) {
    return path.substr(0, path.size() - ext.size()) + suffix;
  }
  return path + suffix;
}

Json to_json(const ScanConfig& c) {
  return Json{{"quantile_lo", c.quantile_lo},       {"quantile_hi", c.quantile_hi}, {"grid", c.grid_count},
              {"window", c.stability_window},       {"tol", c.dispersion_tol},      {"min_exceed", c.min_exceedances},
              {"lookahead", c.lookahead}};
}

Json to_json(const SplitConfig& c) {
  return Json{{"train", c.train}, {"validation", c.validation}, {"test", c.test}, {"offset", c.offset}};
}

void add_scan_options(CLI::App* cmd, ScanConfig& c) {
  cmd->add_option("--grid", c.grid_count, "number of candidate thresholds")->capture_default_str();
  cmd->add_option("--window", c.stability_window, "candidates per stability window")->capture_default_str();
  cmd->add_option("--tol", c.dispersion_tol, "relative dispersion tolerance")->capture_default_str();
  cmd->add_option("--quantile-lo", c.quantile_lo, "lowest candidate quantile of positive values")->capture_default_str();
  cmd->add_option("--quantile-hi", c.quantile_hi, "highest candidate quantile of positive values")->capture_default_str();
  cmd->add_option("--min-exceed", c.min_exceedances, "minimum exceedances per candidate")->capture_default_str();
  cmd->add_option("--lookahead", c.lookahead, "following candidates that must agree (0 = off)")->capture_default_str();
}

void add_split_options(CLI::App* cmd, SplitConfig& c) {
  cmd->add_option("--train", c.train, "training fraction")->capture_default_str();
  cmd->add_option("--validation", c.validation, "validation fraction")->capture_default_str();
  cmd->add_option("--test", c.test, "test fraction")->capture_default_str();
  cmd->add_option("--offset", c.offset, "row at which the training part starts (parts wrap)")->capture_default_str();
}

void report_scan(const ScanResult& s) {
  std::cout << "u* = " << s.u_star << " (candidates " << s.index_lo << ".." << s.index_hi << " of "
            << s.candidates.size() << "), shape = " << s.params.shape << ", scale0 = " << s.params.scale0
            << ", zeta0 = " << s.params.zeta0 << '\n';
  if (!s.stable) {
    warn("no window met the stability tolerance; using the least dispersed window (score " +
         std::to_string(s.max_dispersion) + ")");
  }
}

// ---------------------------------------------------------------------------

struct ScanArgs {
  std::string input, target_col = "y", out, table_out;
  ScanConfig scan;
};

int run_scan(const ScanArgs& a) {
  echo_config(Json{{"command", "scan"}, {"input", a.input}, {"target_col", a.target_col}, {"out", a.out},
                   {"table_out", a.table_out}, {"scan", to_json(a.scan)}});
  const std::vector<double> y = load_column(a.input, a.target_col);
  const ScanResult s = scan_thresholds(y, a.scan);
  report_scan(s);
  write_json_file(a.out, to_json(s));
  if (!a.table_out.empty()) {
    std::ofstream os = open_out(a.table_out);
    write_scan_table(os, s);
  }
  return 0;
}

struct FitArgs {
  std::string input, target_col = "y", scan_path, out, cdf_out, survival_out;
  double train_fraction = 1.0;
  std::size_t offset = 0;
  std::size_t points = 200;
  ScanConfig scan;
};

int run_fit(FitArgs a) {
  if (!(a.train_fraction > 0.0 && a.train_fraction <= 1.0)) throw ConfigError("--train-fraction must lie in (0, 1]");
  if (a.cdf_out.empty()) a.cdf_out = sibling(a.out, ".cdf.tsv");
  if (a.survival_out.empty()) a.survival_out = sibling(a.out, ".survival.tsv");
  echo_config(Json{{"command", "fit-mixture"}, {"input", a.input}, {"target_col", a.target_col},
                   {"scan_file", a.scan_path}, {"train_fraction", a.train_fraction}, {"offset", a.offset},
                   {"out", a.out}, {"cdf_out", a.cdf_out}, {"survival_out", a.survival_out},
                   {"points", a.points}, {"scan", to_json(a.scan)}});
  const std::vector<double> all = load_column(a.input, a.target_col);
  std::vector<double> y;
  const SplitRanges parts =
      split_ranges(all.size(), {.train = a.train_fraction, .validation = 1.0 - a.train_fraction, .test = 0.0,
                                .window = 1, .offset = a.offset});
  for (const RowRange& r : parts.train)
    for (std::size_t i = r.begin; i < r.end; ++i) y.push_back(all[i]);
  if (y.empty()) throw InsufficientDataError("no rows selected for fitting");
  ScanResult s;
  if (a.scan_path.empty()) {
    s = scan_thresholds(y, a.scan);
    report_scan(s);
  } else {
    s = scan_from_json(read_json_file(a.scan_path));
  }
  const MixtureParams m = fit_mixture(y, s);
  std::cout << "fitted on " << y.size() << " values: p0 = " << m.p0 << ", p1 = " << m.p1 << ", mu = " << m.lognormal.mu
            << ", sigma = " << m.lognormal.sigma << ", u* = " << m.u_star << ", shape = " << m.gp.shape
            << ", scale0 = " << m.gp.scale0 << ", zeta0 = " << m.gp.zeta0 << '\n';
  write_json_file(a.out, to_json(m));
  {
    std::ofstream os = open_out(a.cdf_out);
    write_cdf_diagnostics(os, y, m, a.points);
  }
  {
    std::ofstream os = open_out(a.survival_out);
    write_survival_diagnostics(os, y, m, a.points);
  }
  return 0;
}

struct SimulateArgs {
  std::string model, out;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::size_t predictors = 11;
  std::optional<double> noise;
};

int run_simulate(const SimulateArgs& a) {
  const MixtureParams m = mixture_from_json(read_json_file(a.model));
  const double noise = a.noise.value_or(0.2 * m.gp.scale0);
  echo_config(Json{{"command", "simulate"}, {"model", a.model}, {"n", a.n}, {"seed", a.seed},
                   {"predictors", a.predictors}, {"noise", noise}, {"out", a.out}});
  const SeriesDataset ds = generate_synthetic(m, a.n, a.predictors, noise, a.seed);
  write_csv(a.out, ds);
  std::size_t zeros = 0;
  for (double y : ds.target) zeros += y == 0.0 ? 1 : 0;
  std::cout << "wrote " << ds.rows() << " rows; zero fraction " << static_cast<double>(zeros) / static_cast<double>(ds.rows())
            << " (model p0 " << m.p0 << ")\n";
  return 0;
}

struct DataArgs {
  std::string target_col = "y", time_col = "date";
  std::vector<std::string> predictors;

  CsvColumns columns() const { return {target_col, predictors, time_col}; }
  Json json() const { return Json{{"target_col", target_col}, {"time_col", time_col}, {"predictors", predictors}}; }
};

void add_data_options(CLI::App* cmd, DataArgs& d) {
  cmd->add_option("--target-col", d.target_col, "target column")->capture_default_str();
  cmd->add_option("--time-col", d.time_col, "time column (optional in the file)")->capture_default_str();
  cmd->add_option("--predictors", d.predictors, "predictor columns (default: all others)")->delimiter(',');
}

struct TrainArgs {
  std::string data, mixture, out, log;
  DataArgs cols;
  Hyperparameters hp;
  TrainConfig train;
};

int run_train(const TrainArgs& a) {
  TrainConfig cfg = a.train;
  cfg.split.window = a.hp.window;
  echo_config(Json{{"command", "train"},
                   {"data", a.data},
                   {"mixture", a.mixture},
                   {"columns", a.cols.json()},
                   {"window", a.hp.window},
                   {"hidden", a.hp.hidden},
                   {"heads", a.hp.heads},
                   {"tau", a.hp.tau},
                   {"w", a.hp.weight},
                   {"epochs", cfg.epochs},
                   {"batch", cfg.batch_size},
                   {"lr", cfg.learning_rate},
                   {"seed", cfg.seed},
                   {"split", to_json(cfg.split)},
                   {"out", a.out},
                   {"log", a.log}});
  const MixtureParams theta = mixture_from_json(read_json_file(a.mixture));
  const SeriesDataset ds = load_csv(a.data, a.cols.columns());
  const DataSplit parts = split_and_standardize(ds, cfg.split);
  for (const std::string& w : parts.warnings) warn(w);
  std::cout << "windows: train " << parts.train.size() << ", validation " << parts.validation.size() << ", test "
            << parts.test.size() << '\n';
  std::cout << "epoch\ttrain_loss\tval_loss\trecon\tquantile\n";
  const TrainResult r = train(parts.train, parts.validation, theta, a.hp, cfg, [](const EpochLog& e) {
    std::cout << e.epoch << '\t' << e.train_loss << '\t' << e.val_loss << '\t' << e.recon << '\t' << e.quantile
              << std::endl;
  });
  std::cout << "best epoch " << r.best_epoch << ": validation loss " << r.best_val_loss << ", quantile loss "
            << r.best_val_quantile << '\n';
  write_json_file(a.out, to_json(r.model));
  if (!a.log.empty()) {
    std::ofstream os = open_out(a.log);
    write_train_log(os, r.log);
  }
  return 0;
}

struct PredictArgs {
  std::string model, mixture, data, out, part = "all";
  DataArgs cols;
  SplitConfig split;
};

int run_predict(const PredictArgs& a) {
  echo_config(Json{{"command", "predict"}, {"model", a.model}, {"mixture", a.mixture}, {"data", a.data},
                   {"columns", a.cols.json()}, {"part", a.part}, {"split", to_json(a.split)}, {"out", a.out}});
  const DemmaModel model = model_from_json(read_json_file(a.model));
  const MixtureParams theta = mixture_from_json(read_json_file(a.mixture));
  const SeriesDataset ds = load_csv(a.data, a.cols.columns());
  if (ds.predictor_count() != model.hp.predictors) {
    throw ShapeError("data has " + std::to_string(ds.predictor_count()) + " predictors, model expects " +
                     std::to_string(model.hp.predictors));
  }
  WindowedDataset w;
  if (a.part == "all") {
    w = make_windows(ds, model.standardization, model.hp.window);
  } else {
    SplitConfig sc = a.split;
    sc.window = model.hp.window;
    const SplitRanges r = split_ranges(ds.rows(), sc);
    const std::vector<RowRange>& chosen = a.part == "train" ? r.train : a.part == "validation" ? r.validation : r.test;
    w = make_windows(ds, model.standardization, model.hp.window, chosen);
  }
  if (w.empty()) throw InsufficientDataError("no complete window of length " + std::to_string(model.hp.window));
  const Predictions p = predict(model, theta, w);
  std::ofstream os = open_out(a.out);
  const bool dated = !ds.timestamps.empty();
  os << "row";
  if (dated) os << ',' << ds.time_name;
  os << ",y,q_hat,y_hat\n" << std::setprecision(17);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const std::size_t row = w.target_rows[i];
    os << row;
    if (dated) os << ',' << ds.timestamps[row];
    os << ',' << w.targets[i] << ',' << p.quantile[i] << ',' << p.value[i] << '\n';
  }
  std::cout << "wrote " << w.size() << " predictions\n";
  return 0;
}

struct EvaluateArgs {
  std::string preds, out;
  double split_quantile = 0.6;
};

int run_evaluate(const EvaluateArgs& a) {
  echo_config(Json{{"command", "evaluate"}, {"preds", a.preds}, {"split_quantile", a.split_quantile}, {"out", a.out}});
  const CsvTable t = read_csv_table(a.preds);
  const std::size_t cy = t.column("y");
  const std::size_t ch = t.column("y_hat");
  std::vector<double> y, yhat;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    y.push_back(parse_cell(t.rows[r][cy], r + 1, "y"));
    yhat.push_back(parse_cell(t.rows[r][ch], r + 1, "y_hat"));
  }
  const MetricsReport m = evaluate(yhat, y, a.split_quantile);
  const Json j = to_json(m);
  std::cout << j.dump(2) << '\n';
  if (!a.out.empty()) write_json_file(a.out, j);
  return 0;
}

struct GradcheckArgs {
  std::uint64_t seed = 0;
  double tol = 1e-4;
  double step = 1e-5;
  bool corrupt = false;
  std::string mode = "both";
};

int run_gradcheck(const GradcheckArgs& a) {
  ModelGradCheckConfig base;
  echo_config(Json{{"command", "gradcheck"}, {"seed", a.seed}, {"tol", a.tol}, {"step", a.step},
                   {"corrupt", a.corrupt}, {"mode", a.mode}, {"hyperparameters", to_json(base.hp)},
                   {"batch", base.batch}});
  std::vector<bool> modes;
  if (a.mode != "autoregressive") modes.push_back(true);
  if (a.mode != "teacher") modes.push_back(false);
  bool ok = true;
  for (bool tf : modes) {
    ModelGradCheckConfig cfg = base;
    cfg.seed = a.seed;
    cfg.tolerance = a.tol;
    cfg.step = a.step;
    cfg.teacher_forcing = tf;
    cfg.fault = a.corrupt ? AdjointFault::kSigmoid : AdjointFault::kNone;
    const GradCheckReport rep = model_gradient_check(cfg);
    std::cout << "decoder " << (tf ? "teacher-forced" : "autoregressive") << '\n';
    std::cout << "parameter\tsize\tmax_abs_diff\trel_error\tstatus\n";
    for (const GradCheckEntry& e : rep.entries) {
      std::cout << e.name << '\t' << e.size << '\t' << e.max_abs_diff << '\t' << e.rel_error << '\t'
                << (e.passed ? "ok" : "FAIL") << '\n';
    }
    std::size_t failed = 0;
    for (const GradCheckEntry& e : rep.entries) failed += e.passed ? 0 : 1;
    std::cout << (rep.passed ? "PASS" : "FAIL") << ": " << rep.entries.size() - failed << "/" << rep.entries.size()
              << " tensors within " << a.tol << ", worst relative error " << rep.worst << '\n';
    ok = ok && rep.passed;
  }
  return ok ? 0 : static_cast<int>(ExitCode::kNumerical);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"demma: zero-inflated mixture quantile forecasting", "demma"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  ScanArgs scan;
  auto* c_scan = app.add_subcommand("scan", "threshold stability scan");
  c_scan->add_option("--input", scan.input, "CSV file")->required();
  c_scan->add_option("--target-col", scan.target_col, "column to scan")->capture_default_str();
  c_scan->add_option("--out", scan.out, "scan result JSON")->required();
  c_scan->add_option("--table-out", scan.table_out, "per-candidate TSV");
  add_scan_options(c_scan, scan.scan);

  FitArgs fit;
  auto* c_fit = app.add_subcommand("fit-mixture", "fit the zero / log-normal / GP mixture");
  c_fit->add_option("--input", fit.input, "CSV file")->required();
  c_fit->add_option("--target-col", fit.target_col, "column to fit")->capture_default_str();
  c_fit->add_option("--scan", fit.scan_path, "scan JSON to reuse instead of scanning");
  c_fit->add_option("--out", fit.out, "mixture JSON")->required();
  c_fit->add_option("--train-fraction", fit.train_fraction, "fit on this leading fraction of rows")
      ->capture_default_str();
  c_fit->add_option("--offset", fit.offset, "row at which the fitted fraction starts (wraps)")->capture_default_str();
  c_fit->add_option("--cdf-out", fit.cdf_out, "empirical vs model CDF TSV (default <out>.cdf.tsv)");
  c_fit->add_option("--survival-out", fit.survival_out, "log survival TSV (default <out>.survival.tsv)");
  c_fit->add_option("--points", fit.points, "rows in each diagnostic table")->capture_default_str();
  add_scan_options(c_fit, fit.scan);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "synthetic dataset from a mixture");
  c_sim->add_option("--model", sim.model, "mixture JSON")->required();
  c_sim->add_option("--n", sim.n, "rows")->required()->check(CLI::PositiveNumber);
  c_sim->add_option("--seed", sim.seed, "random seed")->capture_default_str();
  c_sim->add_option("--predictors", sim.predictors, "predictor columns")->capture_default_str();
  c_sim->add_option("--noise", sim.noise, "predictor noise scale (default 0.2 x scale0)");
  c_sim->add_option("--out", sim.out, "CSV file")->required();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "train the forecasting network");
  c_train->add_option("--data", tr.data, "CSV file")->required();
  c_train->add_option("--mixture", tr.mixture, "mixture JSON fitted on the training part")->required();
  add_data_options(c_train, tr.cols);
  c_train->add_option("--window", tr.hp.window, "window length T")->capture_default_str();
  c_train->add_option("--hidden", tr.hp.hidden, "hidden size m")->capture_default_str();
  c_train->add_option("--heads", tr.hp.heads, "attention heads d")->capture_default_str();
  c_train->add_option("--tau", tr.hp.tau, "quantile level")->capture_default_str();
  c_train->add_option("--w", tr.hp.weight, "reconstruction weight")->capture_default_str();
  c_train->add_option("--epochs", tr.train.epochs, "epochs")->capture_default_str();
  c_train->add_option("--batch", tr.train.batch_size, "batch size")->capture_default_str();
  c_train->add_option("--lr", tr.train.learning_rate, "learning rate")->capture_default_str();
  c_train->add_option("--seed", tr.train.seed, "random seed")->capture_default_str();
  add_split_options(c_train, tr.train.split);
  c_train->add_option("--out", tr.out, "model JSON")->required();
  c_train->add_option("--log", tr.log, "epoch log CSV");

  PredictArgs pr;
  auto* c_pred = app.add_subcommand("predict", "predict the value after each window");
  c_pred->add_option("--model", pr.model, "model JSON")->required();
  c_pred->add_option("--mixture", pr.mixture, "mixture JSON")->required();
  c_pred->add_option("--data", pr.data, "CSV file")->required();
  add_data_options(c_pred, pr.cols);
  c_pred->add_option("--part", pr.part, "all, train, validation or test")
      ->check(CLI::IsMember({"all", "train", "validation", "test"}))
      ->capture_default_str();
  add_split_options(c_pred, pr.split);
  c_pred->add_option("--out", pr.out, "predictions CSV")->required();

  EvaluateArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "RMSE overall and by region");
  c_eval->add_option("--preds", ev.preds, "predictions CSV with y and y_hat columns")->required();
  c_eval->add_option("--split-quantile", ev.split_quantile, "moderate/extreme split quantile")->capture_default_str();
  c_eval->add_option("--out", ev.out, "metrics JSON");

  GradcheckArgs gc;
  auto* c_grad = app.add_subcommand("gradcheck", "finite-difference check of the training objective");
  c_grad->add_option("--seed", gc.seed, "random seed")->capture_default_str();
  c_grad->add_option("--tol", gc.tol, "relative tolerance")->capture_default_str();
  c_grad->add_option("--step", gc.step, "central difference step")->capture_default_str();
  c_grad->add_flag("--corrupt", gc.corrupt, "deliberately corrupt the sigmoid adjoint");
  c_grad->add_option("--mode", gc.mode, "teacher, autoregressive or both")
      ->check(CLI::IsMember({"teacher", "autoregressive", "both"}))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }

  std::cout << std::setprecision(10);
  try {
    if (c_scan->parsed()) return run_scan(scan);
    if (c_fit->parsed()) return run_fit(fit);
    if (c_sim->parsed()) return run_simulate(sim);
    if (c_train->parsed()) return run_train(tr);
    if (c_pred->parsed()) return run_predict(pr);
    if (c_eval->parsed()) return run_evaluate(ev);
    if (c_grad->parsed()) return run_gradcheck(gc);
  } catch (const demma::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kNumerical);
  }
  return static_cast<int>(ExitCode::kUsage);
}
