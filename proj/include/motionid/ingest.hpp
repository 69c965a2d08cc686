#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "motionid/core.hpp"

namespace motionid::ingest {

inline constexpr std::string_view kSamplesHeader = "timestamp_ns,sensor,x,y,z,w";
inline constexpr std::string_view kEventsHeader = "timestamp_ns,event";

// Parses the canonical two-file CSV layout. SchemaError on a bad header,
// RowError (with line number) on malformed rows, OrderError when event
// timestamps are not strictly increasing.
SensorRecording parse_recording(std::istream& samples, std::istream& events,
                                std::string user_id, std::string device_id);

// Fixed 9-fractional-digit decimal output; parse_recording reproduces values
// that already lie on the 1e-9 grid bit-exactly (see quantize).
void write_recording(const SensorRecording& rec, std::ostream& samples, std::ostream& events);

// Snaps a value onto the 1e-9 decimal grid used by the CSV format.
double quantize(double v);

SensorRecording load_recording(const std::filesystem::path& samples_csv,
                               const std::filesystem::path& events_csv, std::string user_id,
                               std::string device_id);
void save_recording(const SensorRecording& rec, const std::filesystem::path& samples_csv,
                    const std::filesystem::path& events_csv);

enum class DatasetKind { AllMotions, SpecificMotion };

std::string_view to_string(DatasetKind kind);
DatasetKind dataset_kind_from_string(std::string_view name);

struct ManifestEntry {
  std::string user_id;
  std::string device_id;
  std::filesystem::path samples;  // relative to the manifest directory
  std::filesystem::path events;
};

struct DatasetManifest {
  DatasetKind kind = DatasetKind::SpecificMotion;
  double rate_hint = kDefaultRateHz;
  std::vector<ManifestEntry> entries;
  std::filesystem::path root;  // directory the relative paths resolve against

  std::vector<std::string> user_ids() const;  // unique, in entry order
  SensorRecording load(const ManifestEntry& entry) const;
};

// Reads manifest.json; SchemaError on bad content, IoError when a
// referenced file does not exist or a (user, device) pair repeats.
DatasetManifest load_manifest(const std::filesystem::path& manifest_json);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& manifest_json);

}  // namespace motionid::ingest
