#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "optalloc/welfare.hpp"

namespace optalloc {

/// Flat key = value settings. '#' starts a comment; blank lines are ignored;
/// a key may appear once per file. Later sources (CLI flags) override.
class Config {
 public:
  static Config parse(const std::string& text, const std::string& origin = "<string>");
  static Config load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  const std::map<std::string, std::string>& entries() const { return values_; }

  std::string get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double_or(const std::string& key, double fallback) const;
  long long get_int(const std::string& key) const;
  long long get_int_or(const std::string& key, long long fallback) const;
  std::uint64_t get_seed() const;  // "seed" is mandatory; no clock-based default
  std::vector<double> get_list(const std::string& key) const;

  // Canonical "key=value\n" lines in key order, and its FNV-1a hash in hex.
  std::string canonical() const;
  std::string hash() const;

 private:
  std::map<std::string, std::string> values_;
};

std::vector<double> parse_number_list(const std::string& text);
// "a:b:step" inclusive of b (up to rounding), or a comma list.
std::vector<double> parse_grid(const std::string& text);
std::pair<double, double> parse_range(const std::string& text);
double parse_number(const std::string& text, const std::string& what);

struct CsvSchema {
  std::vector<std::string> x_columns;  // empty: every column whose name starts with 'x'
  std::string arm_column = "d";        // empty: single-arm sample
  std::string y_column = "y";
  std::string z_column;                // empty: no cost column
  int num_arms = 2;
};

/// Reads a header + rows CSV into a validated Sample. Errors name the file
/// line of the offending row.
Sample ingest_csv(const std::filesystem::path& path, const CsvSchema& schema);
Sample ingest_csv_text(const std::string& text, const CsvSchema& schema, const std::string& origin = "<string>");
/// Writes x1..xd, d, y[, z] with round-trip precision.
void emit_csv(const Sample& sample, const std::filesystem::path& path);
std::string emit_csv_text(const Sample& sample);

// Reads one numeric column from a CSV with a header row.
std::vector<double> read_csv_column(const std::filesystem::path& path, const std::string& column);

std::string format_double(double v);
std::string checksum_hex(const std::string& bytes);
std::string file_checksum(const std::filesystem::path& path);

struct Artifact {
  std::string path;
  std::string checksum;
};

struct RunRecord {
  std::string task;
  std::string config_hash;
  std::string git_describe;
  double seconds = 0.0;
  std::vector<Artifact> artifacts;
  std::vector<std::pair<std::string, double>> metrics;
  // Assertion name, passed.
  std::vector<std::pair<std::string, bool>> checks;
  bool ok() const;
  std::string to_json() const;
};

/// Collects outputs of one run and deletes them if the run fails.
class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path dir);
  ~OutputDir();
  OutputDir(const OutputDir&) = delete;
  OutputDir& operator=(const OutputDir&) = delete;

  std::filesystem::path path(const std::string& name) const { return dir_ / name; }
  // Writes the file and records it with its checksum.
  void write(const std::string& name, const std::string& contents);
  const std::vector<Artifact>& artifacts() const { return artifacts_; }
  void commit() { committed_ = true; }

 private:
  std::filesystem::path dir_;
  std::vector<Artifact> artifacts_;
  std::vector<std::filesystem::path> written_;
  bool committed_ = false;
};

/// Dispatches on config "task": roc, allocate, dml, coverage, regret, limit,
/// orthogonality, margin, geometry. Writes artifacts and manifest.json under
/// config "out". Entries "assert.<metric> = lo:hi" become checks.
RunRecord run(const Config& config);

std::string git_describe();

}  // namespace optalloc
