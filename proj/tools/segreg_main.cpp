// Command-line front end: data ingestion, detection runs, simulation,
// cross-validation, and DP-vs-BS benchmarking. Outputs are machine readable
// (JSON/CSV); every output file is written atomically and accompanied by a
// <output>.manifest.json sidecar carrying the full run manifest including
// wall-clock timings. The manifest embedded in primary outputs omits thread
// count and timings so that results are byte-identical at any parallelism.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "segreg/segreg.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace segreg;

namespace {

struct SolverFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class PhaseTimer {
 public:
  PhaseTimer() : last_(clock::now()) {}
  void mark(const std::string& phase) {
    auto now = clock::now();
    timings_[phase] = std::chrono::duration<double>(now - last_).count();
    last_ = now;
  }
  const ordered_json& timings() const { return timings_; }

 private:
  using clock = std::chrono::steady_clock;
  clock::time_point last_;
  ordered_json timings_ = ordered_json::object();
};

void apply_threads(int threads) {
  if (threads > 0) parallel::set_max_threads(threads);
}

void center_columns(Dataset& data) {
  const double y_mean = data.y.mean();
  data.y.array() -= y_mean;
  const Eigen::RowVectorXd x_means = data.x.colwise().mean();
  data.x.rowwise() -= x_means;
}

ordered_json alpha_json(const Alpha& alpha) {
  ordered_json out;
  out["fractions"] = alpha.fractions();
  out["rows"] = alpha.cuts;
  out["n"] = alpha.n;
  return out;
}

ordered_json betas_json(const std::vector<SegmentFit>& fits) {
  ordered_json segments = ordered_json::array();
  for (const auto& fit : fits) {
    ordered_json coeffs = ordered_json::array();
    for (const auto& [j, b] : fit.beta)
      coeffs.push_back({{"index", j + 1}, {"value", b}});  // 1-based, matches x1..xp
    segments.push_back(std::move(coeffs));
  }
  return segments;
}

void write_json_atomic(const fs::path& path, const ordered_json& doc) {
  write_text_atomic(path, doc.dump(2) + "\n");
}

void write_manifest_sidecar(const fs::path& output, const ordered_json& manifest,
                            int threads, const PhaseTimer& timer) {
  ordered_json sidecar = manifest;
  sidecar["threads"] = threads > 0 ? threads : parallel::max_threads();
  sidecar["timings_seconds"] = timer.timings();
  write_json_atomic(fs::path(output.string() + ".manifest.json"), sidecar);
}

CovarianceSpec parse_cov(const std::string& text) {
  if (text == "identity") return {CovKind::identity, 0.0};
  auto parse_param = [&](const std::string& prefix) -> std::optional<double> {
    if (text.rfind(prefix + ":", 0) != 0) return std::nullopt;
    try {
      return std::stod(text.substr(prefix.size() + 1));
    } catch (const std::exception&) {
      throw std::invalid_argument("cov: cannot parse parameter in '" + text + "'");
    }
  };
  if (auto rho = parse_param("toeplitz")) return {CovKind::toeplitz, *rho};
  if (auto c = parse_param("equicorr")) return {CovKind::equicorr, *c};
  throw std::invalid_argument(
      "cov must be identity, toeplitz:<rho>, or equicorr:<c>; got '" + text + "'");
}

Eigen::VectorXd json_to_vector(const ordered_json& arr, Index p) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(p);
  if (static_cast<Index>(arr.size()) != p)
    throw std::invalid_argument("model spec: beta length does not match p");
  for (Index j = 0; j < p; ++j) out[j] = arr[static_cast<std::size_t>(j)].get<double>();
  return out;
}

GroundTruthModel load_model(const std::string& model, Index p, CovarianceSpec cov,
                            double sigma) {
  if (model == "two") return two_segment_model(p, cov, sigma);
  if (model == "three") return three_segment_model(p, cov, sigma);
  std::ifstream in(model);
  if (!in) throw std::invalid_argument("model spec file not found: " + model);
  ordered_json doc;
  try {
    doc = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("model spec: " + std::string(e.what()));
  }
  GroundTruthModel truth;
  truth.cov = cov;
  truth.sigma = sigma;
  if (!doc.contains("alpha0") || !doc.contains("betas0"))
    throw std::invalid_argument("model spec: needs alpha0 and betas0");
  truth.alpha0 = doc["alpha0"].get<std::vector<double>>();
  const auto& betas = doc["betas0"];
  if (betas.empty()) throw std::invalid_argument("model spec: betas0 empty");
  truth.p = p > 0 ? p : static_cast<Index>(betas.front().size());
  for (const auto& b : betas) truth.betas0.push_back(json_to_vector(b, truth.p));
  truth.validate();
  return truth;
}

ordered_json truth_json(const GroundTruthModel& truth, Index n, std::uint64_t seed) {
  ordered_json out;
  out["alpha0"] = truth.alpha0;
  std::vector<Index> rows = truth_cut_rows(truth, n);
  out["alpha0_rows"] = rows;
  ordered_json betas = ordered_json::array();
  for (const auto& beta : truth.betas0) {
    ordered_json coeffs = ordered_json::array();
    for (Index j = 0; j < beta.size(); ++j)
      if (beta[j] != 0.0) coeffs.push_back({{"index", j + 1}, {"value", beta[j]}});
    betas.push_back(std::move(coeffs));
  }
  out["betas0"] = std::move(betas);
  out["cov"] = {{"kind", truth.cov.name()}, {"param", truth.cov.param}};
  out["sigma"] = truth.sigma;
  out["n"] = n;
  out["p"] = truth.p;
  out["seed"] = seed;
  return out;
}

std::vector<double> parse_double_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw std::invalid_argument(std::string(what) + ": cannot parse '" + item + "'");
    }
  }
  if (out.empty()) throw std::invalid_argument(std::string(what) + ": empty list");
  return out;
}

// ---------------------------------------------------------------------------
// detect

struct DetectOpts {
  std::string input, output, method = "dp", order_by;
  double lambda = 0.0, gamma = 0.0, delta = 0.25;
  double tol = 1e-8;
  long max_sweeps = 100000;
  int threads = 0;
  bool center = false;
};

int run_detect(const DetectOpts& o) {
  apply_threads(o.threads);
  PhaseTimer timer;
  Dataset data = read_dataset_csv_file(o.input, o.order_by);
  if (o.center) center_columns(data);
  const std::string input_digest = digest_file(o.input);
  timer.mark("load");

  DetectorConfig cfg;
  cfg.lambda = o.lambda;
  cfg.gamma = o.gamma;
  cfg.delta = o.delta;
  cfg.solver_tol = o.tol;
  cfg.solver_max_sweeps = o.max_sweeps;
  if (o.method != "dp" && o.method != "bs")
    throw std::invalid_argument("method must be dp or bs");

  Detector det(data, cfg);
  SegmentedModel model = o.method == "dp" ? det.dp() : det.bs();
  timer.mark("detect");

  for (const auto& fit : model.fits)
    if (!fit.converged)
      throw SolverFailure("solver did not converge on segment (" +
                          std::to_string(fit.interval.begin) + ", " +
                          std::to_string(fit.interval.end) + "]");

  ordered_json manifest;
  manifest["command"] = "detect";
  manifest["version"] = version_string();
  manifest["config"] = {{"input", o.input},     {"method", o.method},
                        {"lambda", o.lambda},   {"gamma", o.gamma},
                        {"delta", o.delta},     {"tol", o.tol},
                        {"max_sweeps", o.max_sweeps}, {"order_by", o.order_by},
                        {"center", o.center},   {"output", o.output}};
  manifest["input_digest"] = input_digest;

  ordered_json out;
  out["k_hat"] = model.k();
  out["alpha_hat"] = alpha_json(model.alpha);
  out["objective"] = model.objective;
  ordered_json losses = ordered_json::array();
  ordered_json gaps = ordered_json::array();
  for (const auto& fit : model.fits) {
    losses.push_back(fit.loss);
    gaps.push_back(fit.kkt_gap);
  }
  out["per_segment_loss"] = std::move(losses);
  out["kkt_gaps"] = std::move(gaps);
  out["betas"] = betas_json(model.fits);
  out["cache_stats"] = {{"hits", det.cache().stats().hits},
                        {"misses", det.cache().stats().misses}};
  out["manifest"] = manifest;
  write_json_atomic(o.output, out);
  timer.mark("write");
  write_manifest_sidecar(o.output, manifest, o.threads, timer);
  return 0;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateOpts {
  std::string model = "two", cov = "identity", output, truth_path;
  Index n = 0, p = 0;
  double sigma = 1.0;
  std::uint64_t seed = 1;
  int threads = 0;
};

int run_simulate(const SimulateOpts& o) {
  apply_threads(o.threads);
  PhaseTimer timer;
  if (o.n < 2) throw std::invalid_argument("simulate: need n >= 2");
  const CovarianceSpec cov = parse_cov(o.cov);
  // p defaults to 2n for the built-in models
  Index p = o.p;
  if (p <= 0 && (o.model == "two" || o.model == "three")) p = 2 * o.n;
  const GroundTruthModel truth = load_model(o.model, p, cov, o.sigma);
  Dataset data = sample_dataset(truth, o.n, o.seed);
  timer.mark("sample");

  ordered_json manifest;
  manifest["command"] = "simulate";
  manifest["version"] = version_string();
  manifest["config"] = {{"model", o.model}, {"cov", o.cov},     {"n", o.n},
                        {"p", truth.p},     {"sigma", o.sigma}, {"seed", o.seed},
                        {"output", o.output}};

  write_text_atomic(o.output, dataset_to_csv(data));
  fs::path truth_path = o.truth_path.empty()
                            ? fs::path(o.output).replace_extension(".truth.json")
                            : fs::path(o.truth_path);
  ordered_json truth_doc = truth_json(truth, o.n, o.seed);
  truth_doc["manifest"] = manifest;
  write_json_atomic(truth_path, truth_doc);
  timer.mark("write");
  write_manifest_sidecar(o.output, manifest, o.threads, timer);
  return 0;
}

// ---------------------------------------------------------------------------
// cv

struct CvOpts {
  std::string input, output, order_by, lambdas;
  double lambda_min = 0.001, lambda_max = 2.0;
  int lambda_count = 0;
  Index k_max = 10;
  double delta = 0.1, tol = 1e-8;
  long max_sweeps = 100000;
  int threads = 0;
  bool center = false;
};

int run_cv(const CvOpts& o) {
  apply_threads(o.threads);
  PhaseTimer timer;
  Dataset data = read_dataset_csv_file(o.input, o.order_by);
  if (o.center) center_columns(data);
  const std::string input_digest = digest_file(o.input);
  timer.mark("load");

  std::vector<double> lambda_grid;
  if (!o.lambdas.empty()) {
    lambda_grid = parse_double_list(o.lambdas, "lambdas");
  } else {
    const int count = o.lambda_count > 0 ? o.lambda_count : 8;
    if (count == 1 || o.lambda_min == o.lambda_max) {
      lambda_grid.push_back(o.lambda_min);
    } else {
      if (!(o.lambda_min > 0.0) || !(o.lambda_max > o.lambda_min))
        throw std::invalid_argument("cv: need 0 < lambda-min < lambda-max");
      const double step = std::log(o.lambda_max / o.lambda_min) / (count - 1);
      for (int i = 0; i < count; ++i)
        lambda_grid.push_back(o.lambda_min * std::exp(step * i));
    }
  }
  if (o.k_max < 1) throw std::invalid_argument("cv: k-max must be >= 1");
  std::vector<Index> k_range;
  for (Index k = 1; k <= o.k_max; ++k) k_range.push_back(k);

  CvConfig ccfg;
  ccfg.delta = o.delta;
  ccfg.solver_tol = o.tol;
  ccfg.solver_max_sweeps = o.max_sweeps;
  CvResult result = cv_grid(data, lambda_grid, k_range, ccfg);
  timer.mark("cv");

  std::string csv = "lambda,k,test_rss\n";
  for (const auto& cell : result.cells) {
    csv += format_double(cell.lambda);
    csv += ',';
    csv += std::to_string(cell.k);
    csv += ',';
    if (cell.test_rss.has_value()) csv += format_double(*cell.test_rss);
    csv += '\n';
  }

  ordered_json manifest;
  manifest["command"] = "cv";
  manifest["version"] = version_string();
  manifest["config"] = {{"input", o.input},   {"lambdas", lambda_grid},
                        {"k_max", o.k_max},   {"delta", o.delta},
                        {"tol", o.tol},       {"max_sweeps", o.max_sweeps},
                        {"order_by", o.order_by}, {"center", o.center},
                        {"output", o.output}};
  manifest["input_digest"] = input_digest;

  const CvCell& best = result.best();
  ordered_json summary;
  summary["argmin"] = {{"lambda", best.lambda},
                       {"k", best.k},
                       {"test_rss", *best.test_rss},
                       {"alpha", alpha_json(*best.alpha)}};
  std::size_t feasible = 0;
  for (const auto& cell : result.cells)
    if (cell.test_rss.has_value()) ++feasible;
  summary["cells_total"] = result.cells.size();
  summary["cells_feasible"] = feasible;
  summary["manifest"] = manifest;

  write_text_atomic(o.output, csv);
  write_json_atomic(fs::path(o.output.empty() ? "cv" : o.output).string() +
                        ".summary.json",
                    summary);
  timer.mark("write");
  write_manifest_sidecar(o.output, manifest, o.threads, timer);
  return 0;
}

// ---------------------------------------------------------------------------
// bench

struct BenchOpts {
  std::string model = "two", cov = "identity", n_list = "100,200,400", output;
  Index p = 50;
  double sigma = 1.0, delta = 0.25;
  double lambda = -1.0, gamma = -1.0;  // <0: use the sqrt(log(p)/(delta n)) rule
  int reps = 5;
  std::uint64_t seed = 1;
  int threads = 0;
};

int run_bench(const BenchOpts& o) {
  apply_threads(o.threads);
  PhaseTimer timer;
  if (o.reps < 1) throw std::invalid_argument("bench: reps must be >= 1");
  const CovarianceSpec cov = parse_cov(o.cov);
  const GroundTruthModel truth = load_model(o.model, o.p, cov, o.sigma);
  std::vector<double> n_values = parse_double_list(o.n_list, "n-list");

  std::string csv = "n,method,mean_seconds,sd_seconds,cache_misses\n";
  for (double n_real : n_values) {
    const Index n = static_cast<Index>(n_real);
    if (n < 2) throw std::invalid_argument("bench: n must be >= 2");
    DetectorConfig cfg;
    cfg.delta = o.delta;
    cfg.lambda = o.lambda >= 0.0
                     ? o.lambda
                     : std::sqrt(std::log(static_cast<double>(truth.p)) /
                                 (o.delta * static_cast<double>(n)));
    cfg.gamma = o.gamma >= 0.0 ? o.gamma : 0.25 * cfg.lambda;

    for (const char* method : {"dp", "bs"}) {
      std::vector<double> seconds(static_cast<std::size_t>(o.reps));
      double miss_sum = 0.0;
      for (int rep = 0; rep < o.reps; ++rep) {
        Dataset data = sample_dataset(truth, n, o.seed + static_cast<std::uint64_t>(rep));
        Detector det(data, cfg);
        auto t0 = std::chrono::steady_clock::now();
        if (method[0] == 'd')
          det.dp();
        else
          det.bs();
        auto t1 = std::chrono::steady_clock::now();
        seconds[static_cast<std::size_t>(rep)] =
            std::chrono::duration<double>(t1 - t0).count();
        miss_sum += static_cast<double>(det.cache().stats().misses);
      }
      double mean = 0.0;
      for (double s : seconds) mean += s;
      mean /= static_cast<double>(o.reps);
      double sd = 0.0;
      if (o.reps > 1) {
        for (double s : seconds) sd += (s - mean) * (s - mean);
        sd = std::sqrt(sd / static_cast<double>(o.reps - 1));
      }
      csv += std::to_string(n);
      csv += ',';
      csv += method;
      csv += ',';
      csv += format_double(mean);
      csv += ',';
      csv += format_double(sd);
      csv += ',';
      csv += format_double(miss_sum / static_cast<double>(o.reps));
      csv += '\n';
    }
  }
  timer.mark("bench");

  ordered_json manifest;
  manifest["command"] = "bench";
  manifest["version"] = version_string();
  manifest["config"] = {{"model", o.model}, {"cov", o.cov},     {"n_list", o.n_list},
                        {"p", o.p},         {"sigma", o.sigma}, {"delta", o.delta},
                        {"lambda", o.lambda}, {"gamma", o.gamma}, {"reps", o.reps},
                        {"seed", o.seed},   {"output", o.output}};
  write_text_atomic(o.output, csv);
  timer.mark("write");
  write_manifest_sidecar(o.output, manifest, o.threads, timer);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"segreg: joint change point and sparse regression estimation"};
  app.require_subcommand(1);

  DetectOpts det;
  CLI::App* cmd_detect = app.add_subcommand(
      "detect", "Detect change points in a CSV dataset (exact DP or binary segmentation)");
  cmd_detect->add_option("--input", det.input, "Input CSV (header y,x1..xp)")->required();
  cmd_detect->add_option("--output", det.output, "Output JSON path")->required();
  cmd_detect->add_option("--method", det.method, "dp | bs")->required();
  cmd_detect->add_option("--lambda", det.lambda, "Sparsity penalty");
  cmd_detect->add_option("--gamma", det.gamma, "Per-segment penalty");
  cmd_detect->add_option("--delta", det.delta, "Minimal segment fraction (default 0.25)");
  cmd_detect->add_option("--tol", det.tol, "Solver tolerance");
  cmd_detect->add_option("--max-sweeps", det.max_sweeps, "Solver sweep cap");
  cmd_detect->add_option("--order-by", det.order_by, "Sort rows by this column, then drop it");
  cmd_detect->add_flag("--center", det.center, "Center y and x columns before fitting");
  cmd_detect->add_option("--threads", det.threads, "Worker thread cap (env SEGREG_THREADS)");

  SimulateOpts sim;
  CLI::App* cmd_simulate =
      app.add_subcommand("simulate", "Sample a dataset from a ground-truth model");
  cmd_simulate->add_option("--model", sim.model, "two | three | <spec.json>");
  cmd_simulate->add_option("--cov", sim.cov, "identity | toeplitz:<rho> | equicorr:<c>");
  cmd_simulate->add_option("--n", sim.n, "Sample size")->required();
  cmd_simulate->add_option("--p", sim.p,
                           "Covariate count (default 2n for built-in models)");
  cmd_simulate->add_option("--sigma", sim.sigma, "Noise standard deviation");
  cmd_simulate->add_option("--seed", sim.seed, "RNG seed");
  cmd_simulate->add_option("--output", sim.output, "Output CSV path")->required();
  cmd_simulate->add_option("--truth", sim.truth_path,
                           "Truth JSON path (default: <output>.truth.json)");
  cmd_simulate->add_option("--threads", sim.threads, "Worker thread cap");

  CvOpts cv;
  CLI::App* cmd_cv = app.add_subcommand(
      "cv", "Ordered-split cross-validation over a (lambda, k) grid");
  cmd_cv->add_option("--input", cv.input, "Input CSV")->required();
  cmd_cv->add_option("--output", cv.output, "Output CSV path")->required();
  cmd_cv->add_option("--lambdas", cv.lambdas, "Explicit comma-separated lambda grid");
  cmd_cv->add_option("--lambda-min", cv.lambda_min, "Log-grid lower end (default 0.001)");
  cmd_cv->add_option("--lambda-max", cv.lambda_max, "Log-grid upper end (default 2)");
  cmd_cv->add_option("--lambda-count", cv.lambda_count, "Log-grid size (default 8)");
  cmd_cv->add_option("--k-max", cv.k_max, "Evaluate k = 1..k_max (default 10)");
  cmd_cv->add_option("--delta", cv.delta, "Minimal segment fraction (default 0.1)");
  cmd_cv->add_option("--tol", cv.tol, "Solver tolerance");
  cmd_cv->add_option("--max-sweeps", cv.max_sweeps, "Solver sweep cap");
  cmd_cv->add_option("--order-by", cv.order_by, "Sort rows by this column, then drop it");
  cmd_cv->add_flag("--center", cv.center, "Center y and x columns before fitting");
  cmd_cv->add_option("--threads", cv.threads, "Worker thread cap");

  BenchOpts bench;
  CLI::App* cmd_bench =
      app.add_subcommand("bench", "Time DP vs BS across sample sizes");
  cmd_bench->add_option("--model", bench.model, "two | three | <spec.json>");
  cmd_bench->add_option("--cov", bench.cov, "Covariance spec");
  cmd_bench->add_option("--p", bench.p, "Covariate count (default 50)");
  cmd_bench->add_option("--sigma", bench.sigma, "Noise standard deviation");
  cmd_bench->add_option("--n-list", bench.n_list, "Comma-separated sample sizes");
  cmd_bench->add_option("--reps", bench.reps, "Replications per size");
  cmd_bench->add_option("--seed", bench.seed, "Master seed (rep r uses seed + r)");
  cmd_bench->add_option("--delta", bench.delta, "Minimal segment fraction");
  cmd_bench->add_option("--lambda", bench.lambda,
                        "Override lambda (default sqrt(log(p)/(delta n)))");
  cmd_bench->add_option("--gamma", bench.gamma, "Override gamma (default 0.25 lambda)");
  cmd_bench->add_option("--output", bench.output, "Output CSV path")->required();
  cmd_bench->add_option("--threads", bench.threads, "Worker thread cap");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 3;
  }

  try {
    if (cmd_detect->parsed()) return run_detect(det);
    if (cmd_simulate->parsed()) return run_simulate(sim);
    if (cmd_cv->parsed()) return run_cv(cv);
    if (cmd_bench->parsed()) return run_bench(bench);
  } catch (const CsvParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const SolverFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
