#include "tbell/cli.hpp"

#include "tbell/error.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace tbell::cli {

namespace fs = std::filesystem;
using io::json;

std::string to_string(BellScheme s) {
  switch (s) {
    case BellScheme::I:
      return "I";
    case BellScheme::II:
      return "II";
    case BellScheme::III:
      return "III";
  }
  return "?";
}

BellScheme parse_scheme(const std::string& s) {
  if (s == "I") return BellScheme::I;
  if (s == "II") return BellScheme::II;
  if (s == "III") return BellScheme::III;
  throw ConfigError("scheme", "expected I, II or III, got '" + s + "'");
}

void ExperimentRecipe::normalize() {
  sim.seed = seed;
  sim.threads = 0;
  lhv.seed = seed;
  lhv.threads = 0;
  lock.sim = sim;
}

void ExperimentRecipe::validate() const {
  layout.validate();
  sim.validate();
  if (layout.delta_t != sim.delta_t) throw ConfigError("layout.delta_t", "must equal sim.delta_t");
  const qcore::Scheme expected = scheme == BellScheme::I    ? qcore::Scheme::PassivePostselected
                                 : scheme == BellScheme::II ? qcore::Scheme::PassiveFull
                                                            : qcore::Scheme::ActiveSwitch;
  if (layout.scheme != expected) {
    throw ConfigError("layout.scheme", "scheme " + to_string(scheme) + " requires " + io::to_string(expected));
  }
  policy.validate(sim.delta_t, sim.jitter_sigma);
  if (!(duration_per_setting > 0.0)) throw ConfigError("duration_per_setting", "must be positive");
  if (scan.steps < 4) throw ConfigError("scan.steps", "need at least 4 points");
  if (!(scan.duration_per_point > 0.0)) throw ConfigError("scan.duration_per_point", "must be positive");
  if (!(scan.stop > scan.start)) throw ConfigError("scan.stop", "must exceed scan.start");
  lock.validate();
  drift.validate();
}

ExperimentRecipe make_recipe(BellScheme scheme) {
  ExperimentRecipe r;
  r.scheme = scheme;
  switch (scheme) {
    case BellScheme::I:
      r.layout.scheme = qcore::Scheme::PassivePostselected;
      r.layout.visibility = 0.95;
      r.policy = analysis::CoincidencePolicy::central_only(2.4e-9);
      break;
    case BellScheme::II:
      r.layout.scheme = qcore::Scheme::PassiveFull;
      r.layout.visibility = 0.95;
      r.policy = analysis::CoincidencePolicy::all_slots(8.1e-9);
      break;
    case BellScheme::III:
      r.layout.scheme = qcore::Scheme::ActiveSwitch;
      r.layout.visibility = 0.89;
      r.policy = analysis::CoincidencePolicy::all_slots(8.1e-9);
      break;
  }
  r.layout.delta_t = r.sim.delta_t;
  r.normalize();
  return r;
}

json to_json(const ExperimentRecipe& r) {
  json sim = io::to_json(r.sim);
  sim.erase("seed");
  json lhv = io::to_json(r.lhv);
  lhv.erase("seed");
  return {{"scheme", to_string(r.scheme)},
          {"seed", r.seed},
          {"out_dir", r.out_dir},
          {"layout", io::to_json(r.layout)},
          {"sim", sim},
          {"policy", io::to_json(r.policy)},
          {"angles", io::to_json(r.angles)},
          {"duration_per_setting", r.duration_per_setting},
          {"scan",
           {{"party", r.scan.party == optics::Party::Alice ? "alice" : "bob"},
            {"start", r.scan.start},
            {"stop", r.scan.stop},
            {"steps", r.scan.steps},
            {"duration_per_point", r.scan.duration_per_point}}},
          {"lock", io::to_json(r.lock)},
          {"drift", io::to_json(r.drift)},
          {"lhv", lhv}};
}

namespace {

template <class T>
T number(const json& j, const std::string& path) {
  if constexpr (std::is_floating_point_v<T>) {
    if (!j.is_number()) throw ConfigError(path, "expected a number");
  } else {
    if (!j.is_number_unsigned()) throw ConfigError(path, "expected a nonnegative integer");
  }
  return j.get<T>();
}

void read_scan(const json& j, ScanConfig& out) {
  if (!j.is_object()) throw ConfigError("scan", "expected an object");
  for (const auto& [key, v] : j.items()) {
    const std::string p = "scan." + key;
    if (key == "party") {
      if (v == "alice") {
        out.party = optics::Party::Alice;
      } else if (v == "bob") {
        out.party = optics::Party::Bob;
      } else {
        throw ConfigError(p, "expected \"alice\" or \"bob\"");
      }
    } else if (key == "start") {
      out.start = number<double>(v, p);
    } else if (key == "stop") {
      out.stop = number<double>(v, p);
    } else if (key == "steps") {
      out.steps = number<std::size_t>(v, p);
    } else if (key == "duration_per_point") {
      out.duration_per_point = number<double>(v, p);
    } else {
      throw ConfigError(p, "unknown field");
    }
  }
}

}  // namespace

ExperimentRecipe parse_recipe(const json& j) {
  if (!j.is_object()) throw ConfigError("", "recipe must be a JSON object");
  BellScheme scheme = BellScheme::I;
  if (const auto it = j.find("scheme"); it != j.end()) {
    if (!it->is_string()) throw ConfigError("scheme", "expected a string");
    scheme = parse_scheme(it->get<std::string>());
  }
  ExperimentRecipe r = make_recipe(scheme);
  for (const auto& [key, v] : j.items()) {
    if (key == "scheme") continue;
    if (key == "seed") {
      r.seed = number<std::uint64_t>(v, key);
    } else if (key == "out_dir") {
      if (!v.is_string()) throw ConfigError(key, "expected a string");
      r.out_dir = v.get<std::string>();
    } else if (key == "layout") {
      io::read(v, key, r.layout);
    } else if (key == "sim") {
      if (v.is_object() && v.contains("seed")) throw ConfigError("sim.seed", "set the top-level seed instead");
      io::read(v, key, r.sim);
    } else if (key == "policy") {
      io::read(v, key, r.policy);
    } else if (key == "angles") {
      io::read(v, key, r.angles);
    } else if (key == "duration_per_setting") {
      r.duration_per_setting = number<double>(v, key);
    } else if (key == "scan") {
      read_scan(v, r.scan);
    } else if (key == "lock") {
      io::read(v, key, r.lock);
    } else if (key == "drift") {
      io::read(v, key, r.drift);
    } else if (key == "lhv") {
      if (v.is_object() && v.contains("seed")) throw ConfigError("lhv.seed", "set the top-level seed instead");
      io::read(v, key, r.lhv);
    } else {
      throw ConfigError(key, "unknown field");
    }
  }
  r.normalize();
  return r;
}

// ---------------------------------------------------------------------------

namespace {

eventsim::SimConfig sim_for(const ExperimentRecipe& r, unsigned threads, std::uint64_t stream) {
  eventsim::SimConfig c = r.sim;
  c.threads = threads;
  c.seed = stream == 0 ? r.seed : mix_stream(r.seed, stream);
  return c;
}

// Stream tags for the independent random parts of one recipe.
constexpr std::uint64_t kScanStream = 1;
constexpr std::uint64_t kAttackStream = 2;

std::vector<eventsim::SettingEntry> chsh_entries(const ExperimentRecipe& r) {
  const auto& g = r.angles;
  const double d = r.duration_per_setting;
  return {{g.a, g.b, d}, {g.a_prime, g.b, d}, {g.a, g.b_prime, d}, {g.a_prime, g.b_prime, d}};
}

analysis::BellRunResult analyze_chsh(const eventsim::SimulationOutput& out, const analysis::CoincidencePolicy& policy,
                                     std::uint64_t* n_coincidences = nullptr) {
  const auto co = analysis::find_coincidences(out.alice, out.bob, out.clock, policy, &out.schedule);
  if (n_coincidences != nullptr) *n_coincidences = co.size();
  return analysis::estimate_chsh(analysis::tally(co, 4));
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string pm(const analysis::Estimate& e, int digits = 4) { return fixed(e.value, digits) + " +- " + fixed(e.sigma, digits); }

std::string bell_summary(const ExperimentRecipe& r, const analysis::BellRunResult& res) {
  static constexpr const char* kLabels[4] = {"E(a,b)  ", "E(a',b) ", "E(a,b') ", "E(a',b')"};
  std::ostringstream os;
  os << "scheme " << to_string(r.scheme) << " (" << io::to_string(r.layout.scheme) << ", "
     << io::to_string(r.policy.mode) << " " << fixed(r.policy.window * 1e9, 2) << " ns), V = " << r.layout.visibility
     << ", seed " << r.seed << "\n";
  for (std::size_t k = 0; k < 4; ++k) {
    os << "  " << kLabels[k] << " = " << pm(res.correlations[k]) << "   (N = " << res.counts[k].total() << ")\n";
  }
  if (res.visibility) os << "  V_exp   = " << pm(*res.visibility) << "\n";
  os << "  S_exp   = " << pm(res.s) << "\n";
  os << "  significance (S - 2)/sigma = " << fixed(res.significance, 1) << " SD\n";
  return os.str();
}

void prepare_dir(const ExperimentRecipe& r) {
  std::error_code ec;
  fs::create_directories(r.out_dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + r.out_dir + ": " + ec.message());
}

void write_common(const ExperimentRecipe& r, const std::string& command, const RunOptions& opt) {
  const fs::path dir(r.out_dir);
  io::write_file(dir / "recipe.json", io::dump(to_json(r)));
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  std::ostringstream stamp;
  stamp << std::put_time(std::gmtime(&t), "%Y-%m-%dT%H:%M:%SZ");
  io::write_file(dir / "metadata.json",
                 io::dump({{"command", command}, {"timestamp", stamp.str()}, {"threads", opt.threads}}));
}

void dump_tags(const ExperimentRecipe& r, const eventsim::SimulationOutput& out, const eventsim::SimConfig& cfg,
               const std::string& prefix) {
  const fs::path dir(r.out_dir);
  eventsim::SimConfig recorded = cfg;
  recorded.threads = 0;
  io::write_tag_dump(dir / (prefix + "alice"), out.alice, {io::TagEncoding::Csv, "alice", 0, out.clock, recorded});
  io::write_tag_dump(dir / (prefix + "bob"), out.bob, {io::TagEncoding::Csv, "bob", 0, out.clock, recorded});
}

}  // namespace

ScanOutcome run_scan(const ExperimentRecipe& r, unsigned threads) {
  r.validate();
  std::vector<eventsim::SettingEntry> entries;
  const std::size_t n = r.scan.steps;
  for (std::size_t i = 0; i < n; ++i) {
    const double phi = r.scan.start + (r.scan.stop - r.scan.start) * static_cast<double>(i) / static_cast<double>(n);
    if (r.scan.party == optics::Party::Bob) {
      entries.push_back({0.0, phi, r.scan.duration_per_point});
    } else {
      entries.push_back({phi, 0.0, r.scan.duration_per_point});
    }
  }
  const auto cfg = sim_for(r, threads, kScanStream);
  const auto schedule = eventsim::schedule_settings(entries, cfg.rep_rate);
  const auto out = eventsim::run_simulation(cfg, r.layout, schedule);
  const auto co = analysis::find_coincidences(out.alice, out.bob, out.clock, r.policy, &schedule);
  const auto counts = analysis::tally(co, n);

  ScanOutcome s;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(schedule.pulses_in(i)) / cfg.rep_rate;
    const double phase = r.scan.party == optics::Party::Bob ? entries[i].phi_b : entries[i].phi_a;
    s.points.push_back({phase, static_cast<double>(counts[i].pp) / t});
  }
  const double span = s.points.back().phase - s.points.front().phase;
  s.short_range = span < qcore::kPi;
  s.fit = analysis::fit_visibility(s.points);
  return s;
}

BellOutcome run_bell(const ExperimentRecipe& r, unsigned threads) {
  r.validate();
  BellOutcome b;
  const auto cfg = sim_for(r, threads, 0);
  const auto schedule = eventsim::schedule_settings(chsh_entries(r), cfg.rep_rate);
  b.events = eventsim::run_simulation(cfg, r.layout, schedule);
  b.result = analyze_chsh(b.events, r.policy, &b.coincidences);
  b.scan = run_scan(r, threads);
  b.result.visibility = b.scan.fit.visibility;
  return b;
}

lock::LockTrace run_lock(const ExperimentRecipe& r, unsigned threads) {
  r.validate();
  lock::LockConfig cfg = r.lock;
  cfg.sim = r.sim;
  cfg.sim.threads = threads;
  return lock::closed_loop_sim(cfg, r.drift);
}

analysis::CoincidencePolicy attack_policy(double delta_t, double jitter_sigma) {
  // Mismatched slots sit delta_t apart with pair jitter sqrt(2) sigma; keep them 5 sigma outside.
  double window = delta_t - 5.0 * std::sqrt(2.0) * jitter_sigma;
  if (window < delta_t / 4.0) window = delta_t / 2.0;
  return {std::min(window, 2.4e-9), analysis::CoincidenceMode::WindowOnly};
}

LhvOutcome run_lhv(const ExperimentRecipe& r, bool optimize, bool through_pipeline, unsigned threads) {
  LhvOutcome o;
  if (optimize) {
    lhv::OptimizerConfig oc = r.lhv;
    oc.threads = threads;
    o.optimization = lhv::optimize_strategy(oc);
    o.strategy = o.optimization->strategy;
  } else {
    o.strategy = lhv::attack_strategy();
  }
  o.report = lhv::evaluate(o.strategy);
  if (through_pipeline) {
    r.sim.validate();
    const auto cfg = sim_for(r, threads, kAttackStream);
    const auto schedule = lhv::chsh_schedule(r.duration_per_setting, cfg.rep_rate);
    const auto out = lhv::simulate_attack(o.strategy, cfg, schedule);
    o.pipeline = analyze_chsh(out, attack_policy(cfg.delta_t, cfg.jitter_sigma));
  }
  return o;
}

// ---------------------------------------------------------------------------

analysis::BellRunResult cmd_bell(const ExperimentRecipe& r, const RunOptions& opt, std::ostream& log) {
  const BellOutcome b = run_bell(r, opt.threads);
  prepare_dir(r);
  const fs::path dir(r.out_dir);
  write_common(r, "bell", opt);
  json result = io::to_json(b.result);
  result["coincidences"] = b.coincidences;
  result["emitted_pairs"] = b.events.emitted_pairs;
  result["scan_fit"] = io::to_json(b.scan.fit);
  io::write_file(dir / "result.json", io::dump(result));
  io::write_file(dir / "scan.csv", io::scan_csv(b.scan.points));
  const double bin = r.sim.tagger_resolution;
  io::write_file(dir / "histogram_alice.csv", io::histogram_csv(analysis::histogram(b.events.alice, b.events.clock, bin)));
  io::write_file(dir / "histogram_bob.csv", io::histogram_csv(analysis::histogram(b.events.bob, b.events.clock, bin)));
  if (opt.dump_tags) dump_tags(r, b.events, sim_for(r, 0, 0), "tags_");
  std::string summary = bell_summary(r, b.result);
  if (b.scan.short_range) summary += "  warning: scan range shorter than half a period\n";
  io::write_file(dir / "summary.txt", summary);
  log << summary;
  return b.result;
}

ScanOutcome cmd_scan(const ExperimentRecipe& r, const RunOptions& opt, std::ostream& log) {
  if (r.scan.stop - r.scan.start < qcore::kPi) log << "warning: scan range shorter than half a period; fitting anyway\n";
  const ScanOutcome s = run_scan(r, opt.threads);
  prepare_dir(r);
  const fs::path dir(r.out_dir);
  write_common(r, "scan", opt);
  io::write_file(dir / "scan.csv", io::scan_csv(s.points));
  io::write_file(dir / "fit.json", io::dump(io::to_json(s.fit)));
  std::ostringstream os;
  os << "scan of " << (r.scan.party == optics::Party::Bob ? "phi_B" : "phi_A") << " over " << s.points.size()
     << " points: V = " << pm(s.fit.visibility) << ", mean rate " << fixed(s.fit.mean_rate, 1) << " /s\n";
  io::write_file(dir / "summary.txt", os.str());
  log << os.str();
  return s;
}

lock::LockTrace cmd_lock(const ExperimentRecipe& r, const RunOptions& opt, std::ostream& log) {
  const lock::LockTrace t = run_lock(r, opt.threads);
  prepare_dir(r);
  const fs::path dir(r.out_dir);
  write_common(r, "lock", opt);
  io::write_file(dir / "lock_trace.csv", io::trace_csv(t));
  const json summary = {{"residual_rms", t.residual_rms},
                        {"residual_max", t.residual_max},
                        {"threshold", r.lock.lock_threshold},
                        {"locked", t.locked},
                        {"intervals", t.points.size()}};
  io::write_file(dir / "lock_summary.json", io::dump(summary));
  std::ostringstream os;
  os << "lock: drift " << io::to_string(r.drift.process) << " " << r.drift.magnitude << " rad / "
     << r.drift.time_constant << " s, rms |phi_S - pi| = " << fixed(t.residual_rms, 4) << " rad (max "
     << fixed(t.residual_max, 4) << ") -> " << (t.locked ? "LOCKED" : "LOCK LOST") << "\n";
  io::write_file(dir / "summary.txt", os.str());
  log << os.str();
  return t;
}

LhvOutcome cmd_lhv(const ExperimentRecipe& r, bool optimize, bool through_pipeline, const RunOptions& opt,
                   std::ostream& log) {
  const LhvOutcome o = run_lhv(r, optimize, through_pipeline, opt.threads);
  prepare_dir(r);
  const fs::path dir(r.out_dir);
  write_common(r, "lhv", opt);
  io::write_file(dir / "strategy.json", io::dump(io::to_json(o.strategy)));
  json report = io::to_json(o.report);
  if (o.optimization) {
    report["optimizer"] = {{"config", io::to_json(r.lhv)},
                           {"objective", o.optimization->objective},
                           {"best_restart", o.optimization->best_restart},
                           {"accepted_history", o.optimization->accepted_history}};
  }
  io::write_file(dir / "report.json", io::dump(report));

  std::ostringstream os;
  os << (optimize ? "optimized" : "two-point attack") << " strategy: S_post = " << fixed(o.report.s_postselected, 4)
     << ", S_full = " << fixed(o.report.s_full, 4) << "\n";
  if (o.pipeline) {
    io::write_file(dir / "attack_result.json", io::dump(io::to_json(*o.pipeline)));
    os << "through the coincidence pipeline: S_exp = " << pm(o.pipeline->s) << "\n";
  }
  if (o.report.s_postselected > 2.0 || (o.pipeline && o.pipeline->s.value > 2.0)) os << kLoopholeBanner << "\n";
  io::write_file(dir / "summary.txt", os.str());
  log << os.str();
  return o;
}

void cmd_histogram(const ExperimentRecipe& r, const fs::path& input, double bin_width, const RunOptions& opt,
                   std::ostream& log) {
  prepare_dir(r);
  const fs::path dir(r.out_dir);
  std::ostringstream os;
  auto emit = [&](const std::string& name, const eventsim::TagStream& tags, const eventsim::PulseClock& clock) {
    const auto h = analysis::histogram(tags, clock, bin_width);
    io::write_file(dir / ("histogram_" + name + ".csv"), io::histogram_csv(h));
    const auto c = analysis::slot_counts(tags, clock, clock.delta_t / 2.0);
    os << name << ": " << tags.size() << " tags, early/central/late = " << c.early << "/" << c.central << "/"
       << c.late << "\n";
  };

  if (!input.empty()) {
    auto dump = io::read_tag_dump(input);
    eventsim::PulseClock clock;
    if (dump.header.clock) {
      clock = *dump.header.clock;
    } else {
      clock = eventsim::PulseClock::from(r.sim, 0);
      clock.slot_offset = analysis::find_central_offset(analysis::histogram(dump.tags, clock, bin_width), clock.delta_t / 2.0);
      os << "no sidecar clock; central slot found at " << fixed(clock.slot_offset * 1e9, 3) << " ns\n";
    }
    emit(dump.header.party.empty() ? "input" : dump.header.party, dump.tags, clock);
  } else {
    r.validate();
    auto cfg = sim_for(r, opt.threads, 0);
    cfg.duration = r.duration_per_setting;
    optics::OpticalLayout layout = r.layout;
    layout.phi_a = r.angles.a;
    layout.phi_b = r.angles.b;
    const auto out = eventsim::run_simulation(cfg, layout);
    emit("alice", out.alice, out.clock);
    emit("bob", out.bob, out.clock);
    if (opt.dump_tags) dump_tags(r, out, cfg, "tags_");
  }
  write_common(r, "histogram", opt);
  io::write_file(dir / "summary.txt", os.str());
  log << os.str();
}

}  // namespace tbell::cli
