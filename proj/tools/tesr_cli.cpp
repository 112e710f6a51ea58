// Command-line front end: data generation, benchmark runs, distance
// covariance of two files, Example 3 regression-function distances.

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "tesr/tesr.hpp"

namespace fs = std::filesystem;
using namespace tesr;

namespace {

void write_study(const sim::GeneratedStudy& st, const fs::path& dir) {
  fs::create_directories(dir);
  for (std::size_t k = 0; k < st.sources.size(); ++k)
    write_dataset(st.sources[k], (dir / ("source_" + std::to_string(st.sources[k].domain_id) + ".csv")).string());
  for (std::size_t t = 0; t < st.targets.size(); ++t) {
    const std::string suffix = st.targets.size() > 1 ? "_" + std::to_string(t + 1) : "";
    write_dataset(st.targets[t], (dir / ("target" + suffix + ".csv")).string());
    write_dataset(st.tests[t], (dir / ("test" + suffix + ".csv")).string());
  }
}

sim::Departure parse_departure(const std::string& s) {
  require(s == "l1" || s == "cosine", "departure must be 'l1' or 'cosine', got '" + s + "'");
  return s == "l1" ? sim::Departure::l1 : sim::Departure::cosine;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TESR transfer learning: simulation, training and evaluation"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen", "Generate a simulated study as CSV files");
  std::string example = "1", departure = "l1", out_dir;
  long long ns = 2000, n0 = 300, d = 60, n_test = sim::kDefaultTestSize;
  std::uint64_t seed = 1;
  gen->add_option("--example", example, "1, 2, 3 or s1")->required()->check(CLI::IsMember({"1", "2", "3", "s1"}));
  gen->add_option("--ns", ns, "rows per source")->capture_default_str();
  gen->add_option("--n0", n0, "target training rows")->capture_default_str();
  gen->add_option("--d", d, "covariate dimension")->capture_default_str();
  gen->add_option("--seed", seed, "replicate seed")->capture_default_str();
  gen->add_option("--n-test", n_test, "test rows")->capture_default_str();
  gen->add_option("--departure", departure, "Example 3 departure: l1 or cosine")->capture_default_str();
  gen->add_option("--out", out_dir, "output directory")->required();

  auto* bench = app.add_subcommand("bench", "Run the experiment described by a JSON config");
  std::string config_path, results_path;
  bool quiet = false;
  bench->add_option("--config", config_path, "JSON config")->required();
  bench->add_option("--out", results_path, "results CSV")->required();
  bench->add_flag("--quiet", quiet, "no progress or summary on stderr");

  auto* dcov = app.add_subcommand("dcov", "Unbiased distance covariance of two row-aligned CSV matrices");
  std::string u_path, v_path;
  dcov->add_option("--u", u_path, "first sample")->required();
  dcov->add_option("--v", v_path, "second sample")->required();

  auto* dist = app.add_subcommand("distances", "Regression-function distances between Example 3 sources and target");
  std::string dist_example = "3";
  long long n_mc = 1000000;
  dist->add_option("--example", dist_example, "only 3 is supported")->required()->check(CLI::IsMember({"3"}));
  dist->add_option("--departure", departure, "l1 or cosine")->required()->check(CLI::IsMember({"l1", "cosine"}));
  dist->add_option("--n-mc", n_mc, "Monte Carlo draws")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) {
      sim::GeneratedStudy st;
      if (example == "1") st = sim::gen_example1(ns, n0, d, seed, n_test);
      else if (example == "2") st = sim::gen_example2(ns, n0, d, seed, n_test);
      else if (example == "3")
        st = sim::gen_example3(parse_departure(departure), {1, 2, 3, 4, 5, 6, 7, 8}, ns, n0, d, seed, n_test);
      else st = sim::gen_exampleS1(ns, n0, d, seed, n_test);
      write_study(st, out_dir);
      std::cout << "wrote " << st.sources.size() << " sources and " << st.targets.size() << " target(s) to "
                << out_dir << "\n";
    } else if (*bench) {
      const ExperimentConfig cfg = load_config(config_path);
      const auto rows = run_experiment(cfg, [quiet](const ResultRow& r) {
        if (!quiet)
          std::fprintf(stderr, "rep %d %-10s %s=%.4f (%.1fs)\n", r.replicate, r.method.c_str(), r.metric.c_str(),
                       r.value, r.wall_time_s);
      });
      write_results(rows, results_path);
      if (!quiet)
        for (const auto& [m, s] : summarize_by_method(rows))
          std::fprintf(stderr, "%-10s mean %.4f sd %.4f over %zu\n", m.c_str(), s.mean, s.sd, s.count);
    } else if (*dcov) {
      const Tensor2D u = load_matrix_csv(u_path);
      const Tensor2D v = load_matrix_csv(v_path);
      std::printf("%.17g\n", dcov_u(u, v));
    } else if (*dist) {
      const auto dep = parse_departure(departure);
      const auto law = sim::CovariateLaw::std_gaussian();
      const sim::GeneratedStudy st = sim::gen_example3(dep, {1}, 4, 4, 6, 0, 1);
      const auto& target = st.meta.target_fns.front();
      std::printf("source,%s\n", dep == sim::Departure::l1 ? "l1_distance" : "cosine_distance");
      for (int s = 1; s <= 8; ++s) {
        const auto fn = sim::example3_source_fn(dep, s);
        const double v = dep == sim::Departure::l1
                             ? sim::fn_l1_distance(fn, target, law, 6, n_mc, sim::kCenteringSeed)
                             : sim::fn_cosine_distance(fn, target, law, 6, n_mc, sim::kCenteringSeed);
        std::printf("%d,%.17g\n", s, v);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
