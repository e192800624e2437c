#include "localgp/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace localgp {

namespace {

using nlohmann::json;

std::vector<std::pair<double, double>> parse_bounds(const json& j) {
  std::vector<std::pair<double, double>> out;
  for (const auto& pair : j) out.emplace_back(pair.at(0).get<double>(), pair.at(1).get<double>());
  return out;
}

SearchConfig parse_strategy(const json& j) {
  SearchConfig cfg;
  cfg.strategy = parse_strategy_kind(j.at("strategy").get<std::string>());
  cfg.budget = j.value("budget", cfg.budget);
  cfg.k = j.value("k", cfg.k);
  cfg.use_tree = j.value("use_tree", cfg.use_tree);
  cfg.use_lsh = j.value("use_lsh", cfg.use_lsh);
  cfg.lsh_trust = j.value("lsh_trust", cfg.lsh_trust);
  cfg.feature_count = j.value("d_features", cfg.feature_count);
  cfg.cone_slack = j.value("cone_slack", cfg.cone_slack);
  if (j.contains("stop_reduction")) cfg.stop_reduction = j.at("stop_reduction").get<double>();
  if (j.contains("lsh")) {
    const json& l = j.at("lsh");
    cfg.lsh.tables = l.value("tables", cfg.lsh.tables);
    cfg.lsh.bits = l.value("bits", cfg.lsh.bits);
    cfg.lsh.seed = l.value("seed", cfg.lsh.seed);
    cfg.lsh.staleness_bound = l.value("staleness_bound", cfg.lsh.staleness_bound);
  }
  if (j.contains("eigen")) {
    const json& e = j.at("eigen");
    cfg.eigen_params.tol = e.value("tol", cfg.eigen_params.tol);
    cfg.eigen_params.max_iters = e.value("max_iters", cfg.eigen_params.max_iters);
    cfg.eigen_params.deflation = e.value("deflation", cfg.eigen_params.deflation);
    cfg.eigen_params.seed = e.value("seed", cfg.eigen_params.seed);
  }
  return cfg;
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

StrategyKind parse_strategy_kind(const std::string& name) {
  if (name == "exhaustive") return StrategyKind::Exhaustive;
  if (name == "nn") return StrategyKind::NearestNeighbor;
  if (name == "maxdist") return StrategyKind::MaxDistance;
  if (name == "feature") return StrategyKind::Feature;
  throw std::invalid_argument("unknown strategy: " + name);
}

ExperimentPlan parse_plan_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("plan: invalid JSON: ") + e.what());
  }

  ExperimentPlan plan;
  const json& design = j.at("design");
  const std::string design_type = design.at("type").get<std::string>();
  if (design_type == "grid") {
    GridSpec g;
    g.counts = design.at("counts").get<std::vector<int>>();
    g.bounds = parse_bounds(design.at("bounds"));
    plan.design = g;
  } else if (design_type == "sobol") {
    SobolSpec s;
    s.n = design.at("n").get<int>();
    s.d = design.at("d").get<int>();
    s.bounds = parse_bounds(design.at("bounds"));
    s.seed = design.value("seed", 0);
    s.scramble = design.value("scramble", false);
    plan.design = s;
  } else if (design_type == "file") {
    plan.design = FileSpec{design.at("path").get<std::string>()};
  } else {
    throw std::invalid_argument("plan: unknown design type " + design_type);
  }

  const json& locations = j.at("locations");
  const std::string loc_type = locations.at("type").get<std::string>();
  if (loc_type == "sobol") {
    SobolSpec s;
    s.n = locations.at("n").get<int>();
    s.d = locations.at("d").get<int>();
    s.bounds = parse_bounds(locations.at("bounds"));
    s.seed = locations.value("seed", 0);
    s.scramble = locations.value("scramble", false);
    plan.locations = s;
  } else if (loc_type == "list") {
    const auto& pts = locations.at("points");
    if (pts.empty()) throw std::invalid_argument("plan: empty location list");
    const int d = static_cast<int>(pts.at(0).size());
    Eigen::MatrixXd mat(pts.size(), d);
    for (std::size_t r = 0; r < pts.size(); ++r)
      for (int c = 0; c < d; ++c) mat(static_cast<int>(r), c) = pts.at(r).at(c).get<double>();
    plan.locations = PointListSpec{std::move(mat)};
  } else {
    throw std::invalid_argument("plan: unknown locations type " + loc_type);
  }

  const json& kernel = j.at("kernel");
  const auto theta = kernel.at("theta").get<std::vector<double>>();
  plan.kernel = KernelSpec(
      Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<int>(theta.size())),
      kernel.value("sigma2", 1.0), kernel.value("power", 2.0));

  const json& strategies = j.at("strategies");
  if (strategies.empty()) throw std::invalid_argument("plan: at least one strategy required");
  for (const auto& s : strategies) plan.strategies.push_back(parse_strategy(s));

  if (j.contains("feature_build")) {
    const json& f = j.at("feature_build");
    plan.feature_build.feature_count = f.value("d_features", plan.feature_build.feature_count);
    plan.feature_build.landmarks = f.value("landmarks", 0);
    plan.feature_build.seed = f.value("seed", plan.feature_build.seed);
    plan.feature_build.sidecar = f.value("sidecar", std::string());
  }

  const std::string response = j.value("response", std::string("zero"));
  if (response == "zero")
    plan.response = ResponseKind::Zero;
  else if (response == "camel")
    plan.response = ResponseKind::Camel;
  else if (response == "file")
    plan.response = ResponseKind::FromFile;
  else
    throw std::invalid_argument("plan: unknown response kind " + response);

  plan.output_path = j.value("output", std::string());
  plan.repetitions = j.value("repetitions", 1);
  plan.workers = j.value("workers", 0);
  if (j.contains("reporting_stages"))
    plan.reporting_stages = j.at("reporting_stages").get<std::vector<int>>();
  if (plan.repetitions < 1) throw std::invalid_argument("plan: repetitions must be >= 1");
  return plan;
}

ExperimentPlan load_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_plan: cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_plan_json(buffer.str());
}

Dataset realize_design(const ExperimentPlan& plan) {
  if (const auto* grid = std::get_if<GridSpec>(&plan.design)) {
    Eigen::MatrixXd inputs = grid_points(grid->counts, grid->bounds);
    return Dataset(inputs, synthesize_responses(inputs, plan.response));
  }
  if (const auto* sobol = std::get_if<SobolSpec>(&plan.design)) {
    Eigen::MatrixXd inputs =
        sobol_points(sobol->n, sobol->d, sobol->bounds, sobol->seed, sobol->scramble);
    return Dataset(inputs, synthesize_responses(inputs, plan.response));
  }
  const auto& file = std::get<FileSpec>(plan.design);
  DesignFile df = read_design_csv(file.path);
  if (plan.response == ResponseKind::FromFile) {
    if (!df.responses)
      throw std::invalid_argument("plan: response column missing in " + file.path);
    return Dataset(df.inputs, *df.responses);
  }
  return Dataset(df.inputs, synthesize_responses(df.inputs, plan.response));
}

Eigen::MatrixXd realize_locations(const ExperimentPlan& plan, int dims) {
  Eigen::MatrixXd pts;
  if (const auto* sobol = std::get_if<SobolSpec>(&plan.locations)) {
    pts = sobol_points(sobol->n, sobol->d, sobol->bounds, sobol->seed, sobol->scramble);
  } else {
    pts = std::get<PointListSpec>(plan.locations).points;
  }
  if (pts.cols() != dims)
    throw std::invalid_argument("plan: location dimension does not match design");
  return pts;
}

namespace {

int resolve_workers(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("LOCALGP_WORKERS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

}  // namespace

EmulateOutput emulate(const ExperimentPlan& plan) {
  const Dataset data = realize_design(plan);
  const KernelSpec& spec = plan.kernel;
  if (spec.dims != data.dims())
    throw std::invalid_argument("plan: kernel dimension does not match design");
  const Eigen::MatrixXd locations = realize_locations(plan, data.dims());

  const SpatialIndex spatial(spec.scale_points(data.inputs()));

  EmulateOutput out;

  // One shared feature map at the largest requested D; smaller strategies
  // truncate it.
  int max_d = 0;
  for (const auto& cfg : plan.strategies)
    if (cfg.strategy == StrategyKind::Feature) max_d = std::max(max_d, cfg.feature_count);

  std::optional<FeatureMap> base_map;
  if (max_d > 0) {
    const auto t0 = std::chrono::steady_clock::now();
    if (!plan.feature_build.sidecar.empty() &&
        std::filesystem::exists(plan.feature_build.sidecar)) {
      base_map = load_feature_map(plan.feature_build.sidecar);
      if (base_map->kernel_hash != spec.fingerprint())
        throw std::invalid_argument("plan: sidecar feature map kernel mismatch");
      if (base_map->feature_count < max_d)
        throw std::invalid_argument("plan: sidecar feature map has too few features");
    } else {
      const int build_d = std::max(max_d, plan.feature_build.feature_count);
      int m = plan.feature_build.landmarks;
      if (m <= 0) m = std::min(data.n_rows(), static_cast<int>(std::ceil(1.2 * build_d)));
      m = std::max(m, build_d);
      base_map = nystrom_build(spec, data, build_d, m, plan.feature_build.seed);
      if (!plan.feature_build.sidecar.empty())
        save_feature_map(*base_map, plan.feature_build.sidecar);
    }
    out.feature_precompute_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  std::vector<std::optional<FeatureMap>> per_strategy_map(plan.strategies.size());
  for (std::size_t s = 0; s < plan.strategies.size(); ++s) {
    const SearchConfig& cfg = plan.strategies[s];
    if (cfg.strategy != StrategyKind::Feature) continue;
    if (cfg.feature_count == base_map->feature_count)
      per_strategy_map[s] = *base_map;  // copy keeps maps independent per strategy
    else
      per_strategy_map[s] = truncate_features(*base_map, cfg.feature_count);
  }

  const int n_loc = static_cast<int>(locations.rows());
  out.locations.resize(n_loc);

  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n_loc) return;
      LocationResult& result = out.locations[i];
      result.location_index = i;
      result.location = locations.row(i).transpose();
      try {
        for (std::size_t s = 0; s < plan.strategies.size(); ++s) {
          const FeatureMap* map =
              per_strategy_map[s] ? &*per_strategy_map[s] : nullptr;
          SearchReport report;
          for (int rep = 0; rep < plan.repetitions; ++rep) {
            SearchReport run = run_search(data, spec, result.location,
                                          plan.strategies[s], &spatial, map);
            if (rep == 0) {
              report = std::move(run);
            } else {
              for (std::size_t st = 0; st < report.stages.size(); ++st)
                report.stages[st].seconds += run.stages[st].seconds;
            }
          }
          if (plan.repetitions > 1)
            for (auto& st : report.stages) st.seconds /= plan.repetitions;
          result.reports.push_back(std::move(report));
        }
        const SearchReport& first = result.reports.front();
        result.mean = predictive_mean(spec, first.state, data, MeanFunction::zero());
        // The state's cached variance is the last cleanly accepted one, so an
        // incomplete (numerically floored) search still yields a prediction.
        result.variance = first.state.variance;
      } catch (const std::exception& e) {
        result.error = e.what();
      }
    }
  };

  const int n_workers = std::min(resolve_workers(plan.workers), n_loc);
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(n_workers);
    for (int t = 0; t < n_workers; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  return out;
}

BenchmarkTable benchmark(const ExperimentPlan& plan) {
  const bool has_baseline =
      std::any_of(plan.strategies.begin(), plan.strategies.end(), [](const SearchConfig& c) {
        return c.strategy == StrategyKind::MaxDistance;
      });
  if (!has_baseline)
    throw std::invalid_argument("benchmark: MaxDistance baseline strategy required");

  const EmulateOutput out = emulate(plan);
  const Dataset data = realize_design(plan);
  const double n = static_cast<double>(data.n_rows());

  // Timing-free raw rows, deterministic across runs and worker counts.
  std::ostringstream raw;
  raw << "location,strategy,stage,chosen_index,reduction,variance,"
         "candidates_examined,candidate_set_size,tset_size,radius,delta,lambda_min\n";
  for (const auto& loc : out.locations) {
    for (const auto& report : loc.reports) {
      for (const auto& rec : report.stages) {
        raw << loc.location_index << ',' << report.strategy << ',' << rec.stage << ','
            << rec.chosen_index << ',' << format_double(rec.reduction) << ','
            << format_double(rec.variance) << ',' << rec.candidates_examined << ','
            << rec.candidate_set_size << ',' << rec.tset_size << ','
            << format_double(rec.radius) << ',' << format_double(rec.delta) << ','
            << format_double(rec.lambda_min) << '\n';
      }
    }
  }

  BenchmarkTable table;
  table.raw_csv = raw.str();

  // Per (strategy, stage) aggregates over locations that completed.
  const std::size_t n_strategies = plan.strategies.size();
  std::vector<double> baseline_variance(plan.reporting_stages.size(), 0.0);
  std::vector<double> baseline_seconds(plan.reporting_stages.size(), 0.0);

  auto aggregate = [&](std::size_t s, int stage, BenchmarkRow& row) {
    int count = 0;
    double sec = 0.0, pct = 0.0, var = 0.0;
    for (const auto& loc : out.locations) {
      if (!loc.error.empty()) continue;
      const auto& stages = loc.reports[s].stages;
      double cumulative = 0.0;
      const StageRecord* at_stage = nullptr;
      for (const auto& rec : stages) {
        if (rec.stage <= stage) cumulative += rec.seconds;
        if (rec.stage == stage) at_stage = &rec;
      }
      if (!at_stage) continue;
      sec += cumulative;
      pct += 100.0 * static_cast<double>(at_stage->tset_size) / n;
      var += at_stage->variance;
      ++count;
    }
    if (count == 0) return false;
    row.mean_seconds = sec / count;
    row.mean_candidate_pct = pct / count;
    row.mean_variance = var / count;
    return true;
  };

  // Baseline pass first so relative differences can be filled in one sweep.
  std::size_t baseline_idx = 0;
  for (std::size_t s = 0; s < n_strategies; ++s)
    if (plan.strategies[s].strategy == StrategyKind::MaxDistance) {
      baseline_idx = s;
      break;
    }
  for (std::size_t t = 0; t < plan.reporting_stages.size(); ++t) {
    BenchmarkRow row;
    if (aggregate(baseline_idx, plan.reporting_stages[t], row)) {
      baseline_variance[t] = row.mean_variance;
      baseline_seconds[t] = row.mean_seconds;
    }
  }

  for (std::size_t s = 0; s < n_strategies; ++s) {
    for (std::size_t t = 0; t < plan.reporting_stages.size(); ++t) {
      BenchmarkRow row;
      row.strategy = strategy_label(plan.strategies[s].strategy);
      if (plan.strategies[s].strategy == StrategyKind::Feature) {
        row.strategy += plan.strategies[s].use_lsh ? "-lsh" : "";
      } else if (plan.strategies[s].strategy == StrategyKind::MaxDistance) {
        row.strategy += plan.strategies[s].use_tree ? "-kdtree" : "";
      }
      row.stage = plan.reporting_stages[t];
      if (!aggregate(s, plan.reporting_stages[t], row)) continue;
      if (baseline_variance[t] > 0.0)
        row.relative_difference =
            (row.mean_variance - baseline_variance[t]) / baseline_variance[t];
      if (row.mean_seconds > 0.0)
        row.speedup_vs_baseline = baseline_seconds[t] / row.mean_seconds;
      table.rows.push_back(row);
    }
  }
  return table;
}

std::string format_benchmark_table(const BenchmarkTable& table) {
  std::ostringstream out;
  out << "strategy,stage,mean_seconds,mean_candidate_pct,mean_variance,"
         "relative_difference,speedup_vs_baseline\n";
  for (const auto& row : table.rows) {
    out << row.strategy << ',' << row.stage << ',' << format_double(row.mean_seconds) << ','
        << format_double(row.mean_candidate_pct) << ',' << format_double(row.mean_variance)
        << ',' << format_double(row.relative_difference) << ','
        << format_double(row.speedup_vs_baseline) << '\n';
  }
  return out.str();
}

}  // namespace localgp
