#include <atomic>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "hamlearn/experiment.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitToleranceFailure = 1;
constexpr int kExitConfigError = 2;

void print_summary(const hl::ExperimentSummary& s) {
  std::cout << s.name << " [" << s.scenario << "] steps=" << s.steps
            << " final_loss=" << s.final_loss << "\n"
            << "  weight diff vs oracle: mean=" << s.final_diff.mean
            << " min=" << s.final_diff.min << " max=" << s.final_diff.max << "\n";
  if (s.final_diff_mainstream.has_value())
    std::cout << "  weight diff (mainstream first-buffer): mean=" << s.final_diff_mainstream->mean
              << " max=" << s.final_diff_mainstream->max << "\n";
  std::cout << "  max step weight diff=" << s.max_step_weight_diff
            << " max loss gap=" << s.max_loss_gap << " runtime=" << s.runtime_sec << "s\n"
            << "  outputs: " << s.hl_csv << ", " << s.oracle_csv << ", " << s.summary_json << "\n"
            << "  " << (s.pass ? "PASS" : "FAIL") << "\n";
}

hl::ExperimentConfig load_config(const std::string& path, const std::string& output_dir,
                                 std::uint64_t seed_override, bool has_seed,
                                 double tol_override, bool has_tol) {
  hl::ExperimentConfig cfg = hl::ExperimentConfig::load(path);
  if (!output_dir.empty()) cfg.output_dir = output_dir;
  if (has_seed) cfg.seed = seed_override;
  if (has_tol) {
    cfg.tolerance.max_weight_diff = tol_override;
    cfg.tolerance.mean_weight_diff = tol_override;
    cfg.tolerance.loss_curve = tol_override;
  }
  return cfg;
}

std::vector<std::string> collect_configs(const std::vector<std::string>& args) {
  std::vector<std::string> paths;
  for (const std::string& arg : args) {
    if (fs::is_directory(arg)) {
      for (const auto& entry : fs::directory_iterator(arg))
        if (entry.path().extension() == ".json") paths.push_back(entry.path().string());
      std::sort(paths.begin(), paths.end());
    } else {
      paths.push_back(arg);
    }
  }
  return paths;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Forward-time optimal-control learner and gradient-descent parity harness"};
  app.require_subcommand(1);

  std::string config_path, output_dir;
  std::uint64_t seed_override = 0;
  double tol_override = 0.0;

  auto* run = app.add_subcommand("run", "Run one experiment config (paired learner vs oracle)");
  run->add_option("--config", config_path, "Experiment config JSON")->required();
  run->add_option("--output-dir", output_dir, "Override the config's output directory");
  auto* seed_opt = run->add_option("--seed", seed_override, "Override the config's seed");
  auto* tol_opt = run->add_option("--tolerance", tol_override, "Override every tolerance");

  std::string cmp_a, cmp_b;
  double cmp_tol = 1e-9;
  auto* compare = app.add_subcommand("compare", "Compare the loss columns of two run CSVs");
  compare->add_option("--a", cmp_a, "First CSV")->required();
  compare->add_option("--b", cmp_b, "Second CSV")->required();
  compare->add_option("--tol", cmp_tol, "Max allowed per-row loss gap");

  std::vector<std::string> sweep_args;
  std::size_t jobs = 1;
  auto* sweep = app.add_subcommand("sweep", "Run several configs (files or directories)");
  sweep->add_option("--configs", sweep_args, "Config files and/or directories")->required();
  sweep->add_option("--output-dir", output_dir, "Override every config's output directory");
  sweep->add_option("--jobs", jobs, "Parallel workers");
  auto* sweep_seed = sweep->add_option("--seed", seed_override, "Override every config's seed");
  auto* sweep_tol = sweep->add_option("--tolerance", tol_override, "Override every tolerance");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      hl::ExperimentConfig cfg = load_config(config_path, output_dir, seed_override,
                                             seed_opt->count() > 0, tol_override,
                                             tol_opt->count() > 0);
      hl::ExperimentSummary summary = hl::run_experiment(cfg);
      print_summary(summary);
      return summary.pass ? kExitPass : kExitToleranceFailure;
    }

    if (compare->parsed()) {
      hl::CurveReport report = hl::compare_curves(cmp_a, cmp_b, cmp_tol);
      std::cout << "rows=" << report.rows << " max_gap=" << report.max_gap;
      if (report.pass) {
        std::cout << " PASS\n";
        return kExitPass;
      }
      std::cout << " FAIL first_violation_row=" << report.first_violation << "\n";
      return kExitToleranceFailure;
    }

    if (sweep->parsed()) {
      const std::vector<std::string> paths = collect_configs(sweep_args);
      if (paths.empty()) throw hl::Error("sweep: no configs found");
      std::vector<hl::ExperimentConfig> configs;
      for (const std::string& p : paths)
        configs.push_back(load_config(p, output_dir, seed_override, sweep_seed->count() > 0,
                                      tol_override, sweep_tol->count() > 0));

      std::vector<hl::ExperimentSummary> summaries(configs.size());
      std::vector<std::string> errors(configs.size());
      std::atomic<std::size_t> next{0};
      std::mutex io;
      auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < configs.size(); i = next.fetch_add(1)) {
          try {
            summaries[i] = hl::run_experiment(configs[i]);
          } catch (const std::exception& e) {
            errors[i] = e.what();
          }
          std::lock_guard<std::mutex> lock(io);
          if (errors[i].empty()) print_summary(summaries[i]);
          else std::cout << configs[i].name << " ERROR: " << errors[i] << "\n";
        }
      };
      std::vector<std::thread> pool;
      const std::size_t n_workers = std::max<std::size_t>(1, std::min(jobs, configs.size()));
      for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
      for (std::thread& t : pool) t.join();

      bool any_error = false, all_pass = true;
      for (std::size_t i = 0; i < configs.size(); ++i) {
        if (!errors[i].empty()) any_error = true;
        else if (!summaries[i].pass) all_pass = false;
      }
      if (any_error) return kExitConfigError;
      return all_pass ? kExitPass : kExitToleranceFailure;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfigError;
  }
  return kExitConfigError;
}
