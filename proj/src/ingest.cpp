#include "motionid/ingest.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace motionid::ingest {

namespace fs = std::filesystem;

namespace {

std::string read_all(std::istream& in) {
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Splits the buffer on LF; a trailing CR is stripped from each line.
std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = end + 1;
  }
  return lines;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(pos));
      return fields;
    }
    fields.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
}

std::int64_t parse_timestamp(std::string_view field, std::size_t line) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw RowError(line, "bad timestamp '" + std::string(field) + "'");
  return v;
}

double parse_value(std::string_view field, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw RowError(line, "bad numeric value '" + std::string(field) + "'");
  if (!std::isfinite(v)) throw RowError(line, "non-finite value '" + std::string(field) + "'");
  return v;
}

void append_fixed9(std::string& out, double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v + 0.0, std::chars_format::fixed, 9);
  if (ec != std::errc()) throw IoError("value not representable in CSV");
  out.append(buf, ptr);
}

void append_int(std::string& out, std::int64_t v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  out.append(buf, ptr);
}

}  // namespace

double quantize(double v) { return std::round(v * 1e9) / 1e9 + 0.0; }

SensorRecording parse_recording(std::istream& samples_in, std::istream& events_in,
                                std::string user_id, std::string device_id) {
  const std::string samples_text = read_all(samples_in);
  const std::string events_text = read_all(events_in);

  const auto sample_lines = split_lines(samples_text);
  if (sample_lines.empty() || sample_lines[0] != kSamplesHeader)
    throw SchemaError("samples header must be '" + std::string(kSamplesHeader) + "'");
  std::vector<SensorSample> samples;
  samples.reserve(sample_lines.size() - 1);
  for (std::size_t i = 1; i < sample_lines.size(); ++i) {
    const std::size_t line = i + 1;
    if (sample_lines[i].empty()) continue;
    const auto f = split_fields(sample_lines[i]);
    if (f.size() != 6) throw RowError(line, "expected 6 fields");
    SensorSample s;
    s.timestamp_ns = parse_timestamp(f[0], line);
    const auto kind = sensor_kind_from_string(f[1]);
    if (!kind) throw RowError(line, "unknown sensor kind '" + std::string(f[1]) + "'");
    s.kind = *kind;
    for (int c = 0; c < 3; ++c) s.values[c] = parse_value(f[2 + c], line);
    if (component_count(s.kind) == 4) {
      s.values[3] = parse_value(f[5], line);
    } else if (!f[5].empty()) {
      throw RowError(line, "w must be empty for 3-component sensors");
    }
    samples.push_back(s);
  }

  const auto event_lines = split_lines(events_text);
  if (event_lines.empty() || event_lines[0] != kEventsHeader)
    throw SchemaError("events header must be '" + std::string(kEventsHeader) + "'");
  std::vector<DeviceEvent> events;
  for (std::size_t i = 1; i < event_lines.size(); ++i) {
    const std::size_t line = i + 1;
    if (event_lines[i].empty()) continue;
    const auto f = split_fields(event_lines[i]);
    if (f.size() != 2) throw RowError(line, "expected 2 fields");
    DeviceEvent e;
    e.timestamp_ns = parse_timestamp(f[0], line);
    const auto kind = event_kind_from_string(f[1]);
    if (!kind) throw RowError(line, "unknown event '" + std::string(f[1]) + "'");
    e.kind = *kind;
    if (!events.empty() && e.timestamp_ns <= events.back().timestamp_ns)
      throw OrderError("line " + std::to_string(line) + ": event timestamps not increasing");
    events.push_back(e);
  }
  return SensorRecording(std::move(user_id), std::move(device_id), std::move(samples),
                         std::move(events));
}

void write_recording(const SensorRecording& rec, std::ostream& samples_out,
                     std::ostream& events_out) {
  std::string buf;
  buf.reserve(1 << 20);
  buf.append(kSamplesHeader);
  buf += '\n';
  for (auto kind : kAllSensorKinds) {
    for (const auto& s : rec.stream(kind)) {
      append_int(buf, s.timestamp_ns);
      buf += ',';
      buf.append(to_string(kind));
      for (int c = 0; c < 3; ++c) {
        buf += ',';
        append_fixed9(buf, s.values[c]);
      }
      buf += ',';
      if (component_count(kind) == 4) append_fixed9(buf, s.values[3]);
      buf += '\n';
      if (buf.size() > (1 << 20) - 256) {
        samples_out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        buf.clear();
      }
    }
  }
  samples_out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  buf.clear();

  buf.append(kEventsHeader);
  buf += '\n';
  for (const auto& e : rec.events()) {
    append_int(buf, e.timestamp_ns);
    buf += ',';
    buf.append(to_string(e.kind));
    buf += '\n';
  }
  events_out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!samples_out || !events_out) throw IoError("failed writing recording");
}

SensorRecording load_recording(const fs::path& samples_csv, const fs::path& events_csv,
                               std::string user_id, std::string device_id) {
  std::ifstream s(samples_csv, std::ios::binary);
  if (!s) throw IoError("cannot open " + samples_csv.string());
  std::ifstream e(events_csv, std::ios::binary);
  if (!e) throw IoError("cannot open " + events_csv.string());
  return parse_recording(s, e, std::move(user_id), std::move(device_id));
}

void save_recording(const SensorRecording& rec, const fs::path& samples_csv,
                    const fs::path& events_csv) {
  if (samples_csv.has_parent_path()) fs::create_directories(samples_csv.parent_path());
  if (events_csv.has_parent_path()) fs::create_directories(events_csv.parent_path());
  std::ofstream s(samples_csv, std::ios::binary);
  std::ofstream e(events_csv, std::ios::binary);
  if (!s || !e) throw IoError("cannot create recording files under " +
                              samples_csv.parent_path().string());
  write_recording(rec, s, e);
}

std::string_view to_string(DatasetKind kind) {
  return kind == DatasetKind::AllMotions ? "AllMotions" : "SpecificMotion";
}

DatasetKind dataset_kind_from_string(std::string_view name) {
  if (name == "AllMotions") return DatasetKind::AllMotions;
  if (name == "SpecificMotion") return DatasetKind::SpecificMotion;
  throw SchemaError("unknown dataset kind '" + std::string(name) + "'");
}

std::vector<std::string> DatasetManifest::user_ids() const {
  std::vector<std::string> ids;
  std::set<std::string> seen;
  for (const auto& e : entries)
    if (seen.insert(e.user_id).second) ids.push_back(e.user_id);
  return ids;
}

SensorRecording DatasetManifest::load(const ManifestEntry& entry) const {
  return load_recording(root / entry.samples, root / entry.events, entry.user_id,
                        entry.device_id);
}

DatasetManifest load_manifest(const fs::path& manifest_json) {
  std::ifstream in(manifest_json);
  if (!in) throw IoError("cannot open manifest " + manifest_json.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& ex) {
    throw SchemaError(std::string("manifest is not valid JSON: ") + ex.what());
  }
  DatasetManifest m;
  m.root = manifest_json.parent_path();
  try {
    m.kind = dataset_kind_from_string(j.at("kind").get<std::string>());
    m.rate_hint = j.at("rate_hint").get<double>();
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& r : j.at("recordings")) {
      ManifestEntry e;
      e.user_id = r.at("user_id").get<std::string>();
      e.device_id = r.at("device_id").get<std::string>();
      e.samples = r.at("samples").get<std::string>();
      e.events = r.at("events").get<std::string>();
      if (!seen.emplace(e.user_id, e.device_id).second)
        throw IoError("duplicate recording for user " + e.user_id + " on " + e.device_id);
      for (const auto& p : {e.samples, e.events})
        if (!fs::exists(m.root / p)) throw IoError("missing file " + (m.root / p).string());
      m.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw SchemaError(std::string("bad manifest: ") + ex.what());
  }
  return m;
}

void save_manifest(const DatasetManifest& m, const fs::path& manifest_json) {
  nlohmann::ordered_json j;
  j["kind"] = std::string(to_string(m.kind));
  j["rate_hint"] = m.rate_hint;
  j["recordings"] = nlohmann::ordered_json::array();
  for (const auto& e : m.entries) {
    nlohmann::ordered_json r;
    r["user_id"] = e.user_id;
    r["device_id"] = e.device_id;
    r["samples"] = e.samples.generic_string();
    r["events"] = e.events.generic_string();
    j["recordings"].push_back(std::move(r));
  }
  if (manifest_json.has_parent_path()) fs::create_directories(manifest_json.parent_path());
  std::ofstream out(manifest_json, std::ios::binary);
  if (!out) throw IoError("cannot write " + manifest_json.string());
  out << j.dump(2) << '\n';
}

}  // namespace motionid::ingest
