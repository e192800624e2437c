// Command-line front end: design generation, feature pre-computation,
// prediction, and benchmark table reproduction.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "localgp/features.hpp"
#include "localgp/harness.hpp"
#include "localgp/localgp.hpp"

namespace {

using namespace localgp;

std::vector<double> parse_csv_doubles(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(std::stod(cell));
  return out;
}

std::vector<std::pair<double, double>> parse_bounds_arg(const std::string& text) {
  std::vector<std::pair<double, double>> out;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto colon = cell.find(':');
    if (colon == std::string::npos)
      throw std::invalid_argument("bounds must be lo:hi,lo:hi,...");
    out.emplace_back(std::stod(cell.substr(0, colon)), std::stod(cell.substr(colon + 1)));
  }
  return out;
}

KernelSpec make_kernel(const std::string& kernel_name, const std::string& theta_csv,
                       double sigma2) {
  if (kernel_name != "gaussian")
    throw std::invalid_argument("unsupported kernel: " + kernel_name);
  const std::vector<double> theta = parse_csv_doubles(theta_csv);
  return KernelSpec::gaussian(
      Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<long>(theta.size())),
      sigma2);
}

ResponseKind parse_response(const std::string& name) {
  if (name == "zero") return ResponseKind::Zero;
  if (name == "camel") return ResponseKind::Camel;
  if (name == "file") return ResponseKind::FromFile;
  throw std::invalid_argument("unknown response kind: " + name);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << text;
}

int run(int argc, char** argv) {
  CLI::App app{"Local Gaussian-process emulation with pruned greedy sub-design search"};
  app.require_subcommand(1);

  // gen grid|sobol
  auto* gen = app.add_subcommand("gen", "Generate a design CSV");
  gen->require_subcommand(1);
  std::string gen_out, gen_bounds, gen_response = "zero";
  std::vector<int> grid_counts;
  int sobol_n = 0, sobol_d = 0;
  std::uint64_t gen_seed = 0;
  bool sobol_scramble = false;

  auto* gen_grid = gen->add_subcommand("grid", "Regular grid design");
  gen_grid->add_option("--counts", grid_counts, "points per dimension")->required();
  gen_grid->add_option("--bounds", gen_bounds, "lo:hi per dimension")->required();
  gen_grid->add_option("--out", gen_out)->required();
  gen_grid->add_option("--response", gen_response, "zero|camel");

  auto* gen_sobol = gen->add_subcommand("sobol", "Sobol sequence design");
  gen_sobol->add_option("--n", sobol_n)->required();
  gen_sobol->add_option("--d", sobol_d)->required();
  gen_sobol->add_option("--bounds", gen_bounds)->required();
  gen_sobol->add_option("--seed", gen_seed);
  gen_sobol->add_flag("--scramble", sobol_scramble);
  gen_sobol->add_option("--out", gen_out)->required();
  gen_sobol->add_option("--response", gen_response, "zero|camel");

  // features build
  auto* features_cmd = app.add_subcommand("features", "Feature map operations");
  features_cmd->require_subcommand(1);
  auto* features_build = features_cmd->add_subcommand("build", "Pre-compute Nystrom features");
  std::string fb_data, fb_out, fb_kernel = "gaussian", fb_theta;
  double fb_sigma2 = 1.0;
  int fb_d = 200, fb_m = 0;
  std::uint64_t fb_seed = 7;
  features_build->add_option("--data", fb_data, "design CSV")->required();
  features_build->add_option("--kernel", fb_kernel);
  features_build->add_option("--theta", fb_theta, "comma-separated lengthscales")->required();
  features_build->add_option("--sigma2", fb_sigma2);
  features_build->add_option("--d-features", fb_d);
  features_build->add_option("--landmarks", fb_m, "0 = min(N, ceil(1.2 D))");
  features_build->add_option("--seed", fb_seed);
  features_build->add_option("--out", fb_out, "sidecar path")->required();

  // predict
  auto* predict = app.add_subcommand("predict", "Local GP prediction at given locations");
  std::string p_data, p_locations, p_kernel = "gaussian", p_theta, p_out;
  std::string p_strategy = "maxdist", p_kdtree = "on", p_lsh = "off", p_response = "file";
  double p_sigma2 = 1.0;
  int p_budget = 30, p_k = 8, p_d = 200, p_workers = 0;
  std::uint64_t p_seed = 1234;
  bool p_lsh_trust = false;
  predict->add_option("--data", p_data, "design CSV (x1..xd[,y])")->required();
  predict->add_option("--locations", p_locations, "locations CSV")->required();
  predict->add_option("--kernel", p_kernel);
  predict->add_option("--theta", p_theta)->required();
  predict->add_option("--sigma2", p_sigma2);
  predict->add_option("--budget", p_budget);
  predict->add_option("--k", p_k);
  predict->add_option("--strategy", p_strategy, "exhaustive|nn|maxdist|feature");
  predict->add_option("--kdtree", p_kdtree, "on|off");
  predict->add_option("--lsh", p_lsh, "on|off");
  predict->add_flag("--lsh-trust", p_lsh_trust);
  predict->add_option("--d-features", p_d);
  predict->add_option("--seed", p_seed);
  predict->add_option("--workers", p_workers);
  predict->add_option("--response", p_response, "file|zero|camel");
  predict->add_option("--out", p_out)->required();

  // bench
  auto* bench = app.add_subcommand("bench", "Run a benchmark plan");
  std::string b_plan, b_out;
  int b_workers = -1;
  bench->add_option("--plan", b_plan, "plan JSON")->required();
  bench->add_option("--out", b_out, "raw CSV path (default: plan output)");
  bench->add_option("--workers", b_workers);

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    const auto bounds = parse_bounds_arg(gen_bounds);
    Eigen::MatrixXd pts;
    if (gen_grid->parsed()) {
      pts = grid_points(grid_counts, bounds);
    } else {
      pts = sobol_points(sobol_n, sobol_d, bounds, gen_seed, sobol_scramble);
    }
    const Eigen::VectorXd y = synthesize_responses(pts, parse_response(gen_response));
    write_design_csv(gen_out, pts, &y);
    std::cout << "wrote " << pts.rows() << " x " << pts.cols() << " design to " << gen_out
              << "\n";
    return 0;
  }

  if (features_cmd->parsed()) {
    const KernelSpec spec = make_kernel(fb_kernel, fb_theta, fb_sigma2);
    const DesignFile df = read_design_csv(fb_data);
    const Dataset data(df.inputs,
                       df.responses ? *df.responses
                                    : Eigen::VectorXd::Zero(df.inputs.rows()).eval());
    int m = fb_m;
    if (m <= 0) m = std::min<int>(data.n_rows(), static_cast<int>(std::ceil(1.2 * fb_d)));
    m = std::max(m, fb_d);
    const FeatureMap map = nystrom_build(spec, data, fb_d, m, fb_seed);
    save_feature_map(map, fb_out);
    std::cout << "built D=" << map.feature_count << " features from m=" << m
              << " landmarks (reconstruction error " << map.reconstruction_error
              << "), wrote " << fb_out << "\n";
    return 0;
  }

  if (predict->parsed()) {
    ExperimentPlan plan;
    plan.design = FileSpec{p_data};
    const DesignFile locs = read_design_csv(p_locations);
    plan.locations = PointListSpec{locs.inputs};
    plan.kernel = make_kernel(p_kernel, p_theta, p_sigma2);
    plan.response = parse_response(p_response);
    SearchConfig cfg;
    cfg.strategy = parse_strategy_kind(p_strategy);
    cfg.budget = p_budget;
    cfg.k = p_k;
    cfg.use_tree = p_kdtree != "off";
    cfg.use_lsh = p_lsh == "on";
    cfg.lsh_trust = p_lsh_trust;
    cfg.feature_count = p_d;
    cfg.eigen_params.seed = p_seed;
    plan.strategies.push_back(cfg);
    plan.feature_build.feature_count = p_d;
    plan.feature_build.seed = p_seed;
    plan.workers = p_workers;

    const EmulateOutput out = emulate(plan);
    std::ostringstream csv;
    csv << "location";
    for (int c = 0; c < plan.kernel.dims; ++c) csv << ",x" << (c + 1);
    csv << ",mean,variance,stages,error\n";
    for (const auto& loc : out.locations) {
      csv << loc.location_index;
      for (int c = 0; c < plan.kernel.dims; ++c) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.17g", loc.location[c]);
        csv << ',' << buf;
      }
      char mbuf[40], vbuf[40];
      std::snprintf(mbuf, sizeof(mbuf), "%.17g", loc.mean);
      std::snprintf(vbuf, sizeof(vbuf), "%.17g", loc.variance);
      csv << ',' << (loc.error.empty() ? mbuf : "") << ','
          << (loc.error.empty() ? vbuf : "") << ','
          << (loc.reports.empty() ? 0 : loc.reports.front().stages.size()) << ','
          << loc.error << '\n';
    }
    write_text(p_out, csv.str());
    std::cout << "predicted " << out.locations.size() << " locations, wrote " << p_out << "\n";
    return 0;
  }

  // bench
  ExperimentPlan plan = load_plan(b_plan);
  if (b_workers >= 0) plan.workers = b_workers;
  const BenchmarkTable table = benchmark(plan);
  const std::string raw_path = !b_out.empty() ? b_out : plan.output_path;
  if (!raw_path.empty()) {
    write_text(raw_path, table.raw_csv);
    write_text(raw_path + ".table.csv", format_benchmark_table(table));
    std::cout << "wrote raw rows to " << raw_path << " and aggregates to " << raw_path
              << ".table.csv\n";
  }
  std::cout << format_benchmark_table(table);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const localgp::NumericalBreakdown& e) {
    std::cerr << "numerical breakdown: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid plan or arguments: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
