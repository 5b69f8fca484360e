#pragma once

// JSON serialization of configs and results, and the tag-dump file format.
//
// Tag dumps are a data file plus a JSON sidecar named <base>.json:
//
//   <base>.csv   header line "channel,timestamp", then one record per row
//   <base>.bin   8-byte magic "TBTAGS01", uint64 record count, then 9-byte
//                records (uint8 channel, uint64 timestamp), little endian
//
// The sidecar carries {"format": "tbell-tags", "version": 1, "encoding",
// "party", "records", "clock", "config"}. Timestamps are tagger ticks.

#include "tbell/analysis.hpp"
#include "tbell/lhv.hpp"
#include "tbell/lock.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace tbell::io {

using json = nlohmann::json;

inline constexpr const char* kTagFormat = "tbell-tags";
inline constexpr int kTagFormatVersion = 1;

// ---------------------------------------------------------------------------
// Enum names

std::string to_string(qcore::Scheme s);
std::string to_string(analysis::CoincidenceMode m);
std::string to_string(lock::DriftProcess p);
std::string to_string(lhv::Objective o);

// ---------------------------------------------------------------------------
// Serialization. read() rejects unknown fields and wrong types with a
// ConfigError naming the dotted path; missing fields keep their defaults.

json to_json(const eventsim::SimConfig& c);
json to_json(const optics::OpticalLayout& l);
json to_json(const analysis::CoincidencePolicy& p);
json to_json(const qcore::ChshAngles& a);
json to_json(const eventsim::PulseClock& c);
json to_json(const lock::PidGains& g);
json to_json(const lock::DriftModel& d);
json to_json(const lock::LockConfig& c);  ///< omits the embedded SimConfig
json to_json(const lhv::OptimizerConfig& c);
json to_json(const lhv::LocalStrategy& s);
json to_json(const lhv::StrategyReport& r);
json to_json(const analysis::Estimate& e);
json to_json(const analysis::CountMatrix& m);
json to_json(const analysis::BellRunResult& r);
json to_json(const analysis::VisibilityFit& f);

void read(const json& j, const std::string& path, eventsim::SimConfig& out);
void read(const json& j, const std::string& path, optics::OpticalLayout& out);
void read(const json& j, const std::string& path, analysis::CoincidencePolicy& out);
void read(const json& j, const std::string& path, qcore::ChshAngles& out);
void read(const json& j, const std::string& path, eventsim::PulseClock& out);
void read(const json& j, const std::string& path, lock::PidGains& out);
void read(const json& j, const std::string& path, lock::DriftModel& out);
void read(const json& j, const std::string& path, lock::LockConfig& out);
void read(const json& j, const std::string& path, lhv::OptimizerConfig& out);
void read(const json& j, const std::string& path, lhv::LocalStrategy& out);

/// Two-space indented with trailing newline; stable across runs.
std::string dump(const json& j);
json parse_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& text);

// ---------------------------------------------------------------------------
// Tag dumps

enum class TagEncoding { Csv, Binary };

struct TagDumpHeader {
  TagEncoding encoding = TagEncoding::Csv;
  std::string party;  ///< "alice", "bob" or free text
  std::uint64_t records = 0;
  std::optional<eventsim::PulseClock> clock;
  std::optional<eventsim::SimConfig> config;
};

struct TagDump {
  TagDumpHeader header;
  eventsim::TagStream tags;
};

void write_tags(std::ostream& os, const eventsim::TagStream& tags, TagEncoding encoding);
eventsim::TagStream read_tags(std::istream& is, TagEncoding encoding);

/// Writes <base>.csv or <base>.bin and the <base>.json sidecar.
void write_tag_dump(const std::filesystem::path& base, const eventsim::TagStream& tags, TagDumpHeader header);

/// Accepts the sidecar, the data file, or the base path. A data file without
/// sidecar is read with an empty header (encoding from the extension).
TagDump read_tag_dump(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// CSV tables

std::string histogram_csv(const analysis::Histogram& h);
std::string scan_csv(const std::vector<analysis::ScanPoint>& scan);
std::string trace_csv(const lock::LockTrace& trace);

}  // namespace tbell::io
