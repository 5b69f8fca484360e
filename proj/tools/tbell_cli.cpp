// Command-line front end: tbell {bell,scan,lock,lhv,histogram} [options]
//
// Exit codes: 0 success, 2 invalid configuration or arguments, 1 runtime failure.

#include "tbell/cli.hpp"
#include "tbell/error.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace {

using namespace tbell;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> scheme;
  std::optional<double> window_ns;
  std::optional<std::string> mode;
  std::optional<double> visibility;
  std::optional<double> duration_s;
  std::optional<std::string> out;
  unsigned threads = 0;
  bool dump_tags = false;

  // scan
  std::optional<std::string> party;
  std::optional<double> start;
  std::optional<double> stop;
  std::optional<std::size_t> steps;

  // lock
  std::optional<std::string> drift;
  std::optional<double> drift_magnitude;
  std::optional<double> drift_time;

  // lhv
  bool optimize = false;
  bool pipeline = false;
  std::optional<std::string> objective;
  std::optional<std::size_t> restarts;
  std::optional<std::size_t> n_lambda;

  // histogram
  std::string input;
  double bin_ps = 81.0;
};

cli::ExperimentRecipe build_recipe(const Flags& f, const std::string& command) {
  cli::ExperimentRecipe r;
  if (!f.config.empty()) {
    io::json j = io::parse_file(f.config);
    if (f.scheme) j["scheme"] = *f.scheme;
    r = cli::parse_recipe(j);
  } else {
    r = cli::make_recipe(f.scheme ? cli::parse_scheme(*f.scheme) : cli::BellScheme::I);
  }
  if (f.seed) r.seed = *f.seed;
  if (f.mode) {
    io::json j = io::to_json(r.policy);
    j["mode"] = *f.mode;
    io::read(j, "policy", r.policy);
  }
  if (f.window_ns) r.policy.window = *f.window_ns * 1e-9;
  if (f.visibility) r.layout.visibility = *f.visibility;
  if (f.duration_s) {
    if (command == "scan") {
      r.scan.duration_per_point = *f.duration_s;
    } else if (command == "lock") {
      r.lock.duration = *f.duration_s;
    } else {
      r.duration_per_setting = *f.duration_s;
    }
  }
  if (f.out) r.out_dir = *f.out;
  if (f.party) {
    if (*f.party != "alice" && *f.party != "bob") throw ConfigError("scan.party", "expected alice or bob");
    r.scan.party = *f.party == "alice" ? optics::Party::Alice : optics::Party::Bob;
  }
  if (f.start) r.scan.start = *f.start;
  if (f.stop) r.scan.stop = *f.stop;
  if (f.steps) r.scan.steps = *f.steps;
  if (f.drift) {
    if (*f.drift == "none") {
      r.drift.magnitude = 0.0;
    } else {
      io::json j = io::to_json(r.drift);
      j["process"] = *f.drift;
      io::read(j, "drift", r.drift);
    }
  }
  if (f.drift_magnitude) r.drift.magnitude = *f.drift_magnitude;
  if (f.drift_time) r.drift.time_constant = *f.drift_time;
  if (f.objective) {
    io::json j = io::to_json(r.lhv);
    j["objective"] = *f.objective;
    io::read(j, "lhv", r.lhv);
  }
  if (f.restarts) r.lhv.restarts = *f.restarts;
  if (f.n_lambda) r.lhv.n_lambda = *f.n_lambda;
  r.normalize();
  return r;
}

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "recipe file (JSON)");
  sub->add_option("--seed", f.seed, "random seed");
  sub->add_option("--scheme", f.scheme, "I, II or III")->check(CLI::IsMember({"I", "II", "III"}));
  sub->add_option("--window-ns", f.window_ns, "coincidence window [ns]");
  sub->add_option("--mode", f.mode, "coincidence mode: central-only, all-slots, window-only");
  sub->add_option("--visibility", f.visibility, "source visibility V");
  sub->add_option("--duration-s", f.duration_s, "acquisition per setting (bell, lhv), per point (scan), run length (lock)");
  sub->add_option("--out", f.out, "output directory");
  sub->add_option("--threads", f.threads, "worker threads (0 = all cores); never changes results");
  sub->add_flag("--dump-tags", f.dump_tags, "also write raw tag dumps");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-bin Bell-test simulator"};
  app.require_subcommand(1);
  Flags f;

  auto* bell = app.add_subcommand("bell", "four-setting CHSH run with visibility scan");
  auto* scan = app.add_subcommand("scan", "coincidence rate versus one analyzer phase, with visibility fit");
  auto* lock_cmd = app.add_subcommand("lock", "closed-loop switch-phase lock simulation");
  auto* lhv = app.add_subcommand("lhv", "local hidden-variable attack on the postselected test");
  auto* hist = app.add_subcommand("histogram", "folded arrival-time histograms");
  for (auto* s : {bell, scan, lock_cmd, lhv, hist}) add_common(s, f);

  scan->add_option("--party", f.party, "alice or bob");
  scan->add_option("--start", f.start, "first phase [rad]");
  scan->add_option("--stop", f.stop, "end of phase range [rad], exclusive");
  scan->add_option("--steps", f.steps, "number of points (>= 4)");

  lock_cmd->add_option("--drift", f.drift, "none, random-walk, sinusoidal, step");
  lock_cmd->add_option("--drift-magnitude", f.drift_magnitude, "[rad]");
  lock_cmd->add_option("--drift-time", f.drift_time, "random-walk time constant or sine period [s]");

  lhv->add_flag("--optimize", f.optimize, "search strategies instead of the two-point attack");
  lhv->add_flag("--pipeline", f.pipeline, "feed the strategy's tag streams through the coincidence analysis");
  lhv->add_option("--objective", f.objective, "maximize-postselected-s or fit-quantum-statistics");
  lhv->add_option("--restarts", f.restarts, "optimizer restarts");
  lhv->add_option("--n-lambda", f.n_lambda, "hidden-variable values");

  hist->add_option("--in", f.input, "tag dump (sidecar .json or data file); simulate if absent");
  hist->add_option("--bin-ps", f.bin_ps, "bin width [ps]");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const cli::RunOptions opt{f.threads, f.dump_tags};
    if (bell->parsed()) {
      cli::cmd_bell(build_recipe(f, "bell"), opt, std::cout);
    } else if (scan->parsed()) {
      const auto r = build_recipe(f, "scan");
      cli::cmd_scan(r, opt, std::cout);
    } else if (lock_cmd->parsed()) {
      cli::cmd_lock(build_recipe(f, "lock"), opt, std::cout);
    } else if (lhv->parsed()) {
      cli::cmd_lhv(build_recipe(f, "lhv"), f.optimize, f.pipeline, opt, std::cout);
    } else if (hist->parsed()) {
      cli::cmd_histogram(build_recipe(f, "histogram"), f.input, f.bin_ps * 1e-12, opt, std::cout);
    }
  } catch (const ConfigError& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return 2;
  } catch (const DomainError& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
