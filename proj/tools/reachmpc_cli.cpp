// Command-line front end: scenario generation, single and batch closed-loop
// simulation, horizon sweeps, and result aggregation.

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>

#include "reachmpc/harness/generate.hpp"
#include "reachmpc/harness/report.hpp"
#include "reachmpc/harness/runner.hpp"

namespace fs = std::filesystem;
using namespace reachmpc;
using namespace reachmpc::harness;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitScenarioSpace = 3;

std::vector<std::string> scenario_files(const std::string& dir) {
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".json") paths.push_back(entry.path().string());
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw std::runtime_error("no scenario files in " + dir);
  return paths;
}

struct Job {
  Scenario scenario;
  std::string out_path;
};

void run_jobs(std::vector<Job> jobs, int threads) {
  std::atomic<size_t> next{0};
  std::mutex io_mutex;
  auto worker = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      const auto [log, metrics] = run_scenario(jobs[i].scenario);
      write_runlog(log, jobs[i].out_path);
      std::lock_guard<std::mutex> lock(io_mutex);
      std::printf("%-28s %-14s avoid=%d ttg=%s solve=%.2fms\n",
                  log.meta.scenario_name.c_str(), log.meta.method.c_str(),
                  metrics.collision_avoided ? 1 : 0,
                  metrics.time_to_goal ? std::to_string(*metrics.time_to_goal).c_str()
                                       : "-",
                  metrics.mean_solver_ms);
    }
  };
  std::vector<std::thread> pool;
  const int n = std::max(1, threads);
  for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reachability-constrained MPC simulator"};
  app.require_subcommand(1);

  // gen-scenarios
  auto* gen = app.add_subcommand("gen-scenarios", "generate goal-directed scenarios");
  GenConfig gen_cfg;
  std::string gen_out = "scen";
  gen->add_option("--n", gen_cfg.n, "number of scenarios");
  gen->add_option("--humans", gen_cfg.humans, "walkers per scenario");
  gen->add_option("--seed", gen_cfg.seed, "generator seed");
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--speed-min", gen_cfg.walker_speed_min, "walker speed lower bound");
  gen->add_option("--speed-max", gen_cfg.walker_speed_max, "walker speed upper bound");
  gen->add_option("--horizon", gen_cfg.controller.T, "controller horizon steps");
  gen->add_option("--timeout", gen_cfg.timeout, "simulation timeout [s]");

  // simulate
  auto* sim = app.add_subcommand("simulate", "run one scenario closed loop");
  std::string sim_scenario, sim_method, sim_out = "runs";
  sim->add_option("--scenario", sim_scenario, "scenario JSON path")->required();
  sim->add_option("--method", sim_method, "override scenario method");
  sim->add_option("--out", sim_out, "output directory for the run log");

  // batch
  auto* batch = app.add_subcommand("batch", "run a scenario directory x methods");
  std::string batch_dir, batch_methods = "ours", batch_out = "runs";
  int batch_jobs = static_cast<int>(std::thread::hardware_concurrency());
  batch->add_option("--scenarios", batch_dir, "scenario directory")->required();
  batch->add_option("--methods", batch_methods, "comma-separated method list");
  batch->add_option("--jobs", batch_jobs, "worker threads");
  batch->add_option("--out", batch_out, "output directory");

  // sweep-horizon
  auto* sweep = app.add_subcommand("sweep-horizon", "rerun scenarios across horizons");
  std::string sweep_dir, sweep_values = "5,20,40,60", sweep_out = "runs";
  std::string sweep_method = "ours";
  int sweep_jobs = static_cast<int>(std::thread::hardware_concurrency());
  sweep->add_option("--scenarios", sweep_dir, "scenario directory")->required();
  sweep->add_option("--values", sweep_values, "comma-separated horizon lengths");
  sweep->add_option("--method", sweep_method, "method to sweep");
  sweep->add_option("--jobs", sweep_jobs, "worker threads");
  sweep->add_option("--out", sweep_out, "output directory");

  // report
  auto* rep = app.add_subcommand("report", "aggregate run logs");
  std::string rep_runs, rep_out = "table.csv";
  rep->add_option("--runs", rep_runs, "run-log directory")->required();
  rep->add_option("--out", rep_out, "output CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen->parsed()) {
      const auto scenarios = gen_scenarios(gen_cfg);
      fs::create_directories(gen_out);
      for (const auto& sc : scenarios) {
        save_scenario(sc, (fs::path(gen_out) / (sc.name + ".json")).string());
      }
      std::printf("wrote %zu scenarios to %s\n", scenarios.size(), gen_out.c_str());
      return kExitOk;
    }
    if (sim->parsed()) {
      Scenario sc = load_scenario(sim_scenario);
      if (!sim_method.empty()) sc.method = method_from_string(sim_method);
      fs::create_directories(sim_out);
      const auto [log, metrics] = run_scenario(sc);
      const std::string out_path =
          (fs::path(sim_out) / (sc.name + "_" + to_string(sc.method) + ".jsonl")).string();
      write_runlog(log, out_path);
      std::printf("%s method=%s avoided=%d min_dist=%.3f ttg=%s solve=%.2fms asm=%.2fms\n",
                  sc.name.c_str(), to_string(sc.method).c_str(),
                  metrics.collision_avoided ? 1 : 0, metrics.min_joint_distance,
                  metrics.time_to_goal ? std::to_string(*metrics.time_to_goal).c_str() : "-",
                  metrics.mean_solver_ms, metrics.mean_assembly_ms);
      return kExitOk;
    }
    if (batch->parsed()) {
      std::vector<MethodKind> methods;
      std::stringstream ss(batch_methods);
      std::string tok;
      while (std::getline(ss, tok, ',')) methods.push_back(method_from_string(tok));
      fs::create_directories(batch_out);
      std::vector<Job> jobs;
      for (const auto& path : scenario_files(batch_dir)) {
        const Scenario base = load_scenario(path);
        for (MethodKind m : methods) {
          Scenario sc = base;
          sc.method = m;
          const std::string out_path =
              (fs::path(batch_out) / (sc.name + "_" + to_string(m) + ".jsonl")).string();
          jobs.push_back({std::move(sc), out_path});
        }
      }
      run_jobs(std::move(jobs), batch_jobs);
      return kExitOk;
    }
    if (sweep->parsed()) {
      std::vector<int> horizons;
      std::stringstream ss(sweep_values);
      std::string tok;
      while (std::getline(ss, tok, ',')) horizons.push_back(std::stoi(tok));
      const MethodKind method = method_from_string(sweep_method);
      fs::create_directories(sweep_out);
      std::vector<Job> jobs;
      for (const auto& path : scenario_files(sweep_dir)) {
        const Scenario base = load_scenario(path);
        for (int T : horizons) {
          Scenario sc = base;
          sc.method = method;
          sc.controller.T = T;
          sc.name = base.name + "_T" + std::to_string(T);
          const std::string out_path =
              (fs::path(sweep_out) / (sc.name + "_" + to_string(method) + ".jsonl"))
                  .string();
          jobs.push_back({std::move(sc), out_path});
        }
      }
      run_jobs(std::move(jobs), sweep_jobs);
      return kExitOk;
    }
    if (rep->parsed()) {
      const auto summaries = load_run_dir(rep_runs);
      const auto rows = aggregate(summaries);
      std::cout << format_table(rows);
      std::ofstream out(rep_out);
      if (!out) throw std::runtime_error("cannot write " + rep_out);
      out << format_csv(rows);
      std::printf("wrote %s\n", rep_out.c_str());
      return kExitOk;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    const std::string msg = e.what();
    if (msg.rfind("scenario-space", 0) == 0) return kExitScenarioSpace;
    return kExitConfig;
  }
  return kExitOk;
}
