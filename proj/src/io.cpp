#include "tbell/io.hpp"

#include "tbell/error.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace tbell::io {

namespace {

template <class E, std::size_t N>
using NameTable = std::array<std::pair<E, const char*>, N>;

constexpr NameTable<qcore::Scheme, 3> kSchemeNames{{
    {qcore::Scheme::PassivePostselected, "passive-postselected"},
    {qcore::Scheme::PassiveFull, "passive-full"},
    {qcore::Scheme::ActiveSwitch, "active-switch"},
}};
constexpr NameTable<analysis::CoincidenceMode, 3> kModeNames{{
    {analysis::CoincidenceMode::CentralOnly, "central-only"},
    {analysis::CoincidenceMode::AllSlots, "all-slots"},
    {analysis::CoincidenceMode::WindowOnly, "window-only"},
}};
constexpr NameTable<lock::DriftProcess, 3> kDriftNames{{
    {lock::DriftProcess::RandomWalk, "random-walk"},
    {lock::DriftProcess::Sinusoidal, "sinusoidal"},
    {lock::DriftProcess::Step, "step"},
}};
constexpr NameTable<lhv::Objective, 2> kObjectiveNames{{
    {lhv::Objective::MaximizePostselectedS, "maximize-postselected-s"},
    {lhv::Objective::FitQuantumStatistics, "fit-quantum-statistics"},
}};

template <class E, std::size_t N>
std::string name_of(const NameTable<E, N>& table, E value) {
  for (const auto& [e, name] : table) {
    if (e == value) return name;
  }
  return "?";
}

template <class E, std::size_t N>
E parse_name(const NameTable<E, N>& table, const json& j, const std::string& path) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    for (const auto& [e, name] : table) {
      if (s == name) return e;
    }
  }
  std::string allowed;
  for (const auto& [e, name] : table) allowed += (allowed.empty() ? "" : ", ") + std::string(name);
  throw ConfigError(path, "expected one of: " + allowed);
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void get(const json& j, const std::string& path, double& out) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  out = j.get<double>();
}
void get(const json& j, const std::string& path, std::uint64_t& out) {
  if (!j.is_number_unsigned()) throw ConfigError(path, "expected a nonnegative integer");
  out = j.get<std::uint64_t>();
}
static_assert(std::is_same_v<std::size_t, std::uint64_t>, "size_t fields are read as uint64");
void get(const json& j, const std::string& path, unsigned& out) {
  std::uint64_t v = 0;
  get(j, path, v);
  if (v > std::numeric_limits<unsigned>::max()) throw ConfigError(path, "value too large");
  out = static_cast<unsigned>(v);
}
void get(const json& j, const std::string& path, std::optional<double>& out) {
  if (j.is_null()) {
    out.reset();
    return;
  }
  double v = 0.0;
  get(j, path, v);
  out = v;
}
void get(const json& j, const std::string& path, qcore::Scheme& out) { out = parse_name(kSchemeNames, j, path); }
void get(const json& j, const std::string& path, analysis::CoincidenceMode& out) { out = parse_name(kModeNames, j, path); }
void get(const json& j, const std::string& path, lock::DriftProcess& out) { out = parse_name(kDriftNames, j, path); }
void get(const json& j, const std::string& path, lhv::Objective& out) { out = parse_name(kObjectiveNames, j, path); }

/// Field-by-field reader that remembers which keys were consumed.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  template <class T>
  Fields& opt(const std::string& key, T& out) {
    seen_.insert(key);
    if (const auto it = j_.find(key); it != j_.end()) get(*it, join(path_, key), out);
    return *this;
  }

  template <class T>
  Fields& sub(const std::string& key, T& out) {
    seen_.insert(key);
    if (const auto it = j_.find(key); it != j_.end()) read(*it, join(path_, key), out);
    return *this;
  }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void done() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError(join(path_, key), "unknown field");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json rows_to_json(const lhv::LocalStrategy& s, bool alice) {
  json out = json::array();
  const std::size_t n_settings = alice ? s.settings_a() : s.settings_b();
  for (std::size_t l = 0; l < s.n_lambda(); ++l) {
    json per_lambda = json::array();
    for (std::size_t k = 0; k < n_settings; ++k) per_lambda.push_back((alice ? s.alice(l, k) : s.bob(l, k)).p);
    out.push_back(per_lambda);
  }
  return out;
}

void rows_from_json(const json& j, const std::string& path, lhv::LocalStrategy& s, bool alice) {
  const std::size_t n_settings = alice ? s.settings_a() : s.settings_b();
  if (!j.is_array() || j.size() != s.n_lambda()) throw ConfigError(path, "expected one row list per hidden variable");
  for (std::size_t l = 0; l < s.n_lambda(); ++l) {
    const auto row_path = path + "[" + std::to_string(l) + "]";
    if (!j[l].is_array() || j[l].size() != n_settings) throw ConfigError(row_path, "expected one row per setting");
    for (std::size_t k = 0; k < n_settings; ++k) {
      const auto& row = j[l][k];
      const auto p = row_path + "[" + std::to_string(k) + "]";
      if (!row.is_array() || row.size() != 4) throw ConfigError(p, "expected 4 probabilities (S+, S-, L+, L-)");
      auto& r = alice ? s.alice(l, k) : s.bob(l, k);
      for (std::size_t m = 0; m < 4; ++m) get(row[m], p + "[" + std::to_string(m) + "]", r.p[m]);
    }
  }
}

std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

std::filesystem::path with_ext(std::filesystem::path p, const char* ext) { return p.replace_extension(ext); }

}  // namespace

std::string to_string(qcore::Scheme s) { return name_of(kSchemeNames, s); }
std::string to_string(analysis::CoincidenceMode m) { return name_of(kModeNames, m); }
std::string to_string(lock::DriftProcess p) { return name_of(kDriftNames, p); }
std::string to_string(lhv::Objective o) { return name_of(kObjectiveNames, o); }

// ---------------------------------------------------------------------------

json to_json(const eventsim::SimConfig& c) {
  return {{"rep_rate", c.rep_rate},
          {"pair_prob", c.pair_prob},
          {"efficiency", c.efficiency},
          {"jitter_sigma", c.jitter_sigma},
          {"dark_rate", c.dark_rate},
          {"duration", c.duration},
          {"tagger_resolution", c.tagger_resolution},
          {"delta_t", c.delta_t},
          {"slot_offset", c.slot_offset},
          {"dead_time", c.dead_time},
          {"seed", c.seed}};  // threads never changes results, so it is not recorded
}

void read(const json& j, const std::string& path, eventsim::SimConfig& out) {
  Fields f(j, path);
  f.opt("rep_rate", out.rep_rate).opt("pair_prob", out.pair_prob).opt("jitter_sigma", out.jitter_sigma);
  f.opt("dark_rate", out.dark_rate).opt("duration", out.duration).opt("tagger_resolution", out.tagger_resolution);
  f.opt("delta_t", out.delta_t).opt("slot_offset", out.slot_offset).opt("dead_time", out.dead_time);
  f.opt("seed", out.seed).opt("threads", out.threads);
  if (const json* eff = f.raw("efficiency")) {
    const auto p = join(path, "efficiency");
    if (eff->is_number()) {
      double v = 0.0;
      get(*eff, p, v);
      out.set_efficiency(v);
    } else if (eff->is_array() && eff->size() == out.efficiency.size()) {
      for (std::size_t i = 0; i < out.efficiency.size(); ++i) get((*eff)[i], p + "[" + std::to_string(i) + "]", out.efficiency[i]);
    } else {
      throw ConfigError(p, "expected a number or an array of 4 numbers");
    }
  }
  f.done();
}

json to_json(const optics::OpticalLayout& l) {
  return {{"delta_t", l.delta_t},
          {"phi_a", l.phi_a},
          {"phi_b", l.phi_b},
          {"switch_a", l.switch_a},
          {"switch_b", l.switch_b},
          {"long_bin_a", l.long_bin_a ? json(*l.long_bin_a) : json(nullptr)},
          {"long_bin_b", l.long_bin_b ? json(*l.long_bin_b) : json(nullptr)},
          {"scheme", to_string(l.scheme)},
          {"visibility", l.visibility}};
}

void read(const json& j, const std::string& path, optics::OpticalLayout& out) {
  Fields f(j, path);
  f.opt("delta_t", out.delta_t).opt("phi_a", out.phi_a).opt("phi_b", out.phi_b);
  f.opt("switch_a", out.switch_a).opt("switch_b", out.switch_b);
  f.opt("long_bin_a", out.long_bin_a).opt("long_bin_b", out.long_bin_b);
  f.opt("scheme", out.scheme).opt("visibility", out.visibility);
  f.done();
}

json to_json(const analysis::CoincidencePolicy& p) { return {{"window", p.window}, {"mode", to_string(p.mode)}}; }

void read(const json& j, const std::string& path, analysis::CoincidencePolicy& out) {
  Fields f(j, path);
  f.opt("window", out.window).opt("mode", out.mode);
  f.done();
}

json to_json(const qcore::ChshAngles& a) {
  return {{"a", a.a}, {"a_prime", a.a_prime}, {"b", a.b}, {"b_prime", a.b_prime}};
}

void read(const json& j, const std::string& path, qcore::ChshAngles& out) {
  Fields f(j, path);
  f.opt("a", out.a).opt("a_prime", out.a_prime).opt("b", out.b).opt("b_prime", out.b_prime);
  f.done();
}

json to_json(const eventsim::PulseClock& c) {
  return {{"rep_rate", c.rep_rate},
          {"resolution", c.resolution},
          {"slot_offset", c.slot_offset},
          {"delta_t", c.delta_t},
          {"n_pulses", c.n_pulses}};
}

void read(const json& j, const std::string& path, eventsim::PulseClock& out) {
  Fields f(j, path);
  f.opt("rep_rate", out.rep_rate).opt("resolution", out.resolution).opt("slot_offset", out.slot_offset);
  f.opt("delta_t", out.delta_t).opt("n_pulses", out.n_pulses);
  f.done();
}

json to_json(const lock::PidGains& g) {
  return {{"kp", g.kp}, {"ki", g.ki}, {"kd", g.kd}, {"integrator_limit", g.integrator_limit}};
}

void read(const json& j, const std::string& path, lock::PidGains& out) {
  Fields f(j, path);
  f.opt("kp", out.kp).opt("ki", out.ki).opt("kd", out.kd).opt("integrator_limit", out.integrator_limit);
  f.done();
}

json to_json(const lock::DriftModel& d) {
  return {{"process", to_string(d.process)},
          {"magnitude", d.magnitude},
          {"time_constant", d.time_constant},
          {"step_time", d.step_time}};
}

void read(const json& j, const std::string& path, lock::DriftModel& out) {
  Fields f(j, path);
  f.opt("process", out.process).opt("magnitude", out.magnitude).opt("time_constant", out.time_constant);
  f.opt("step_time", out.step_time);
  f.done();
}

json to_json(const lock::LockConfig& c) {
  return {{"gains", to_json(c.gains)},
          {"interval", c.interval},
          {"volts_to_radians", c.volts_to_radians},
          {"dither", c.dither},
          {"counts_per_interval", c.counts_per_interval},
          {"error_limit", c.error_limit},
          {"sign_gate", c.sign_gate},
          {"initial_phase", c.initial_phase},
          {"duration", c.duration},
          {"settle_time", c.settle_time},
          {"lock_threshold", c.lock_threshold}};
}

void read(const json& j, const std::string& path, lock::LockConfig& out) {
  Fields f(j, path);
  f.sub("gains", out.gains).opt("interval", out.interval).opt("volts_to_radians", out.volts_to_radians);
  f.opt("dither", out.dither).opt("counts_per_interval", out.counts_per_interval).opt("error_limit", out.error_limit);
  f.opt("sign_gate", out.sign_gate).opt("initial_phase", out.initial_phase).opt("duration", out.duration);
  f.opt("settle_time", out.settle_time).opt("lock_threshold", out.lock_threshold);
  f.done();
}

json to_json(const lhv::OptimizerConfig& c) {
  return {{"objective", to_string(c.objective)},
          {"n_lambda", c.n_lambda},
          {"restarts", c.restarts},
          {"max_sweeps", c.max_sweeps},
          {"visibility", c.visibility},
          {"angles", to_json(c.angles)},
          {"seed", c.seed}};
}

void read(const json& j, const std::string& path, lhv::OptimizerConfig& out) {
  Fields f(j, path);
  f.opt("objective", out.objective).opt("n_lambda", out.n_lambda).opt("restarts", out.restarts);
  f.opt("max_sweeps", out.max_sweeps).opt("visibility", out.visibility).sub("angles", out.angles);
  f.opt("seed", out.seed).opt("threads", out.threads);
  f.done();
}

json to_json(const lhv::LocalStrategy& s) {
  return {{"n_lambda", s.n_lambda()},
          {"settings_a", s.settings_a()},
          {"settings_b", s.settings_b()},
          {"weights", s.weights()},
          {"response_order", {"S+", "S-", "L+", "L-"}},
          {"alice", rows_to_json(s, true)},
          {"bob", rows_to_json(s, false)}};
}

void read(const json& j, const std::string& path, lhv::LocalStrategy& out) {
  Fields f(j, path);
  std::size_t n = 0, sa = 2, sb = 2;
  f.opt("n_lambda", n).opt("settings_a", sa).opt("settings_b", sb);
  if (n == 0) throw ConfigError(join(path, "n_lambda"), "must be positive");
  lhv::LocalStrategy s(n, sa, sb);
  if (const json* w = f.raw("weights")) {
    if (!w->is_array() || w->size() != n) throw ConfigError(join(path, "weights"), "expected n_lambda numbers");
    std::vector<double> weights(n);
    for (std::size_t i = 0; i < n; ++i) get((*w)[i], join(path, "weights") + "[" + std::to_string(i) + "]", weights[i]);
    s.set_weights(std::move(weights));
  }
  f.raw("response_order");
  if (const json* a = f.raw("alice")) rows_from_json(*a, join(path, "alice"), s, true);
  if (const json* b = f.raw("bob")) rows_from_json(*b, join(path, "bob"), s, false);
  f.done();
  try {
    s.validate();
  } catch (const DomainError& e) {
    throw ConfigError(path, e.what());
  }
  out = std::move(s);
}

json to_json(const lhv::StrategyReport& r) {
  json pairs = json::array();
  for (std::size_t i = 0; i < r.pairs.size(); ++i) {
    for (std::size_t k = 0; k < r.pairs[i].size(); ++k) {
      const auto& p = r.pairs[i][k];
      pairs.push_back({{"setting_a", i},
                       {"setting_b", k},
                       {"postselected_correlation", p.postselected_correlation},
                       {"keep_rate", p.keep_rate},
                       {"full_correlation", p.full_correlation},
                       {"alice_marginal_kept", p.alice_marginal_kept}});
    }
  }
  return {{"s_postselected", r.s_postselected}, {"s_full", r.s_full}, {"pairs", pairs}};
}

json to_json(const analysis::Estimate& e) { return {{"value", e.value}, {"sigma", e.sigma}}; }

json to_json(const analysis::CountMatrix& m) {
  return {{"pp", m.pp}, {"pm", m.pm}, {"mp", m.mp}, {"mm", m.mm}, {"total", m.total()}};
}

json to_json(const analysis::BellRunResult& r) {
  static constexpr const char* kLabels[4] = {"E(a,b)", "E(a',b)", "E(a,b')", "E(a',b')"};
  json settings = json::array();
  for (std::size_t k = 0; k < 4; ++k) {
    settings.push_back(
        {{"label", kLabels[k]}, {"counts", to_json(r.counts[k])}, {"correlation", to_json(r.correlations[k])}});
  }
  return {{"settings", settings},
          {"s", to_json(r.s)},
          {"significance", r.significance},
          {"visibility", r.visibility ? to_json(*r.visibility) : json(nullptr)}};
}

json to_json(const analysis::VisibilityFit& f) {
  return {{"visibility", to_json(f.visibility)},
          {"mean_rate", f.mean_rate},
          {"phase0", f.phase0},
          {"covers_half_period", f.covers_half_period}};
}

// ---------------------------------------------------------------------------

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open file");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string(), std::string("invalid JSON: ") + e.what());
  }
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'T', 'B', 'T', 'A', 'G', 'S', '0', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 8);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw AnalysisError("truncated binary tag dump");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

TagEncoding encoding_from_extension(const std::filesystem::path& p) {
  return p.extension() == ".bin" ? TagEncoding::Binary : TagEncoding::Csv;
}

}  // namespace

void write_tags(std::ostream& os, const eventsim::TagStream& tags, TagEncoding encoding) {
  if (encoding == TagEncoding::Csv) {
    os << "channel,timestamp\n";
    for (const auto& t : tags) os << static_cast<unsigned>(t.channel) << ',' << t.timestamp << '\n';
    return;
  }
  os.write(kMagic, sizeof kMagic);
  put_u64(os, tags.size());
  for (const auto& t : tags) {
    os.put(static_cast<char>(t.channel));
    put_u64(os, t.timestamp);
  }
}

eventsim::TagStream read_tags(std::istream& is, TagEncoding encoding) {
  eventsim::TagStream out;
  if (encoding == TagEncoding::Binary) {
    char magic[8];
    if (!is.read(magic, 8) || !std::equal(magic, magic + 8, kMagic)) throw AnalysisError("not a binary tag dump");
    const std::uint64_t n = get_u64(is);
    out.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(n, 1u << 26)));
    for (std::uint64_t i = 0; i < n; ++i) {
      const int c = is.get();
      if (c == std::char_traits<char>::eof()) throw AnalysisError("truncated binary tag dump");
      if (c >= eventsim::kNumChannels) throw AnalysisError("channel id out of range in tag dump");
      out.push_back({static_cast<std::uint8_t>(c), get_u64(is)});
    }
    return out;
  }
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || (line_no == 1 && line.rfind("channel", 0) == 0)) continue;
    const auto comma = line.find(',');
    unsigned channel = 0;
    std::uint64_t ts = 0;
    const char* end = line.data() + line.size();
    if (comma == std::string::npos ||
        std::from_chars(line.data(), line.data() + comma, channel).ec != std::errc{} ||
        std::from_chars(line.data() + comma + 1, end, ts).ptr != end) {
      throw AnalysisError("malformed tag dump row " + std::to_string(line_no));
    }
    if (channel >= eventsim::kNumChannels) throw AnalysisError("channel id out of range on row " + std::to_string(line_no));
    out.push_back({static_cast<std::uint8_t>(channel), ts});
  }
  return out;
}

void write_tag_dump(const std::filesystem::path& base, const eventsim::TagStream& tags, TagDumpHeader header) {
  header.records = tags.size();
  const auto data = with_ext(base, header.encoding == TagEncoding::Csv ? ".csv" : ".bin");
  {
    std::ofstream out(data, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + data.string());
    write_tags(out, tags, header.encoding);
  }
  json side = {{"format", kTagFormat},
               {"version", kTagFormatVersion},
               {"encoding", header.encoding == TagEncoding::Csv ? "csv" : "binary"},
               {"data", data.filename().string()},
               {"party", header.party},
               {"records", header.records},
               {"clock", header.clock ? to_json(*header.clock) : json(nullptr)},
               {"config", header.config ? to_json(*header.config) : json(nullptr)}};
  write_file(with_ext(base, ".json"), dump(side));
}

TagDump read_tag_dump(const std::filesystem::path& path) {
  TagDump dump;
  const auto sidecar = with_ext(path, ".json");
  std::filesystem::path data = path;
  if (std::filesystem::exists(sidecar)) {
    const json side = parse_file(sidecar);
    Fields f(side, "sidecar");
    const json* format = f.raw("format");
    if (format == nullptr || *format != kTagFormat) throw ConfigError("sidecar.format", "not a tbell tag dump");
    std::uint64_t version = 0;
    f.opt("version", version);
    if (version != kTagFormatVersion) throw ConfigError("sidecar.version", "unsupported version");
    const json* enc = f.raw("encoding");
    dump.header.encoding = enc != nullptr && *enc == "binary" ? TagEncoding::Binary : TagEncoding::Csv;
    if (const json* d = f.raw("data"); d != nullptr && d->is_string()) {
      data = sidecar.parent_path() / d->get<std::string>();
    }
    if (const json* p = f.raw("party"); p != nullptr && p->is_string()) dump.header.party = p->get<std::string>();
    f.opt("records", dump.header.records);
    if (const json* c = f.raw("clock"); c != nullptr && !c->is_null()) {
      eventsim::PulseClock clock;
      read(*c, "sidecar.clock", clock);
      dump.header.clock = clock;
    }
    if (const json* c = f.raw("config"); c != nullptr && !c->is_null()) {
      eventsim::SimConfig cfg;
      read(*c, "sidecar.config", cfg);
      dump.header.config = cfg;
    }
    f.done();
  } else {
    dump.header.encoding = encoding_from_extension(path);
  }
  std::ifstream in(data, std::ios::binary);
  if (!in) throw ConfigError(data.string(), "cannot open tag dump");
  dump.tags = read_tags(in, dump.header.encoding);
  if (std::filesystem::exists(sidecar) && dump.tags.size() != dump.header.records) {
    throw AnalysisError("tag dump record count does not match its sidecar");
  }
  dump.header.records = dump.tags.size();
  return dump;
}

// ---------------------------------------------------------------------------

std::string histogram_csv(const analysis::Histogram& h) {
  std::ostringstream os;
  os << "t_ns,counts\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i) os << format_double(h.bin_center(i) * 1e9) << ',' << h.counts[i] << '\n';
  return os.str();
}

std::string scan_csv(const std::vector<analysis::ScanPoint>& scan) {
  std::ostringstream os;
  os << "phase,rate\n";
  for (const auto& p : scan) os << format_double(p.phase) << ',' << format_double(p.rate) << '\n';
  return os.str();
}

std::string trace_csv(const lock::LockTrace& trace) {
  std::ostringstream os;
  os << "t,phi_s_true,R,bias,n_c,n_l\n";
  for (const auto& p : trace.points) {
    os << format_double(p.t) << ',' << format_double(p.phi_true) << ',' << format_double(p.ratio) << ','
       << format_double(p.bias) << ',' << p.n_c << ',' << p.n_l << '\n';
  }
  return os.str();
}

}  // namespace tbell::io
