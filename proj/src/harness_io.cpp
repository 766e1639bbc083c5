#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "optalloc/harness.hpp"
#include "optalloc/rng.hpp"

namespace optalloc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  return std::all_of(k.begin(), k.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '.' || c == '-';
  });
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

double parse_number(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  double v = 0.0;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  if (!t.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (t.empty() || ec != std::errc() || ptr != last || !std::isfinite(v))
    throw std::invalid_argument(what + ": '" + text + "' is not a finite number");
  return v;
}

std::vector<double> parse_number_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number(item, "list entry"));
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

std::vector<double> parse_grid(const std::string& text) {
  if (text.find(':') == std::string::npos) return parse_number_list(text);
  std::stringstream ss(text);
  std::string a, b, s;
  std::getline(ss, a, ':');
  std::getline(ss, b, ':');
  std::getline(ss, s, ':');
  const double lo = parse_number(a, "grid start"), hi = parse_number(b, "grid end"), step = parse_number(s, "grid step");
  if (!(step > 0.0) || !(hi >= lo)) throw std::invalid_argument("grid needs start <= end and a positive step");
  // Points are lo + i*step rounded to 12 decimals, so 0.05:0.95:0.05 yields
  // exactly the doubles nearest 0.05, 0.1, ..., 0.95.
  const auto count = static_cast<long long>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> out;
  for (long long i = 0; i < count; ++i) out.push_back(std::round((lo + static_cast<double>(i) * step) * 1e12) / 1e12);
  return out;
}

std::pair<double, double> parse_range(const std::string& text) {
  const auto c = text.find(':');
  if (c == std::string::npos) throw std::invalid_argument("range '" + text + "' must look like lo:hi");
  const double lo = parse_number(text.substr(0, c), "range start"), hi = parse_number(text.substr(c + 1), "range end");
  if (!(lo <= hi)) throw std::invalid_argument("range '" + text + "' has lo > hi");
  return {lo, hi};
}

Config Config::parse(const std::string& text, const std::string& origin) {
  Config cfg;
  std::stringstream ss(text);
  std::string line;
  int number = 0;
  while (std::getline(ss, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(number);
    if (eq == std::string::npos) throw std::invalid_argument(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!valid_key(key)) throw std::invalid_argument(where + ": bad key '" + key + "'");
    if (cfg.values_.count(key)) throw std::invalid_argument(where + ": duplicate key '" + key + "'");
    cfg.values_[key] = value;
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) { return parse(read_file(path), path.string()); }

void Config::set(const std::string& key, const std::string& value) {
  if (!valid_key(key)) throw std::invalid_argument("bad config key '" + key + "'");
  values_[key] = value;
}

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

std::string Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw std::invalid_argument("missing config key '" + key + "'");
  return it->second;
}

std::string Config::get_or(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key) const { return parse_number(get(key), key); }

double Config::get_double_or(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

long long Config::get_int(const std::string& key) const {
  const std::string t = trim(get(key));
  long long v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    // Accept integral values written in floating notation such as 1e6.
    const double d = parse_number(t, key);
    if (d != std::floor(d) || std::abs(d) > 9e18) throw std::invalid_argument(key + ": '" + t + "' is not an integer");
    return static_cast<long long>(d);
  }
  return v;
}

long long Config::get_int_or(const std::string& key, long long fallback) const {
  return has(key) ? get_int(key) : fallback;
}

std::uint64_t Config::get_seed() const {
  if (!has("seed")) throw std::invalid_argument("config must set 'seed' explicitly");
  const long long s = get_int("seed");
  if (s < 0) throw std::invalid_argument("seed must be nonnegative");
  return static_cast<std::uint64_t>(s);
}

std::vector<double> Config::get_list(const std::string& key) const { return parse_number_list(get(key)); }

std::string Config::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

std::string Config::hash() const { return checksum_hex(canonical()); }

std::string format_double(double v) {
  if (!std::isfinite(v)) throw NonFiniteError("refusing to write a non-finite value");
  // Shortest representation that parses back to the same double.
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string checksum_hex(const std::string& bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

std::string file_checksum(const std::filesystem::path& path) { return checksum_hex(read_file(path)); }

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> line_numbers;
};

CsvTable parse_csv(const std::string& text, const std::string& origin) {
  CsvTable t;
  std::stringstream ss(text);
  std::string line;
  int number = 0;
  while (std::getline(ss, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size()) {
      std::ostringstream msg;
      msg << origin << ": line " << number << " has " << cells.size() << " cells, header has " << t.header.size();
      throw std::invalid_argument(msg.str());
    }
    t.rows.push_back(std::move(cells));
    t.line_numbers.push_back(number);
  }
  if (t.header.empty()) throw std::invalid_argument(origin + ": empty file");
  if (t.rows.empty()) throw std::invalid_argument(origin + ": no data rows");
  return t;
}

std::size_t column_index(const CsvTable& t, const std::string& name, const std::string& origin) {
  auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) throw std::invalid_argument(origin + ": missing column '" + name + "'");
  return static_cast<std::size_t>(it - t.header.begin());
}

double cell_number(const CsvTable& t, std::size_t r, std::size_t c, const std::string& origin) {
  try {
    return parse_number(t.rows[r][c], t.header[c]);
  } catch (const std::invalid_argument& e) {
    std::ostringstream msg;
    msg << origin << ": line " << t.line_numbers[r] << " (data row " << r + 1 << "): " << e.what();
    throw std::invalid_argument(msg.str());
  }
}

}  // namespace

Sample ingest_csv_text(const std::string& text, const CsvSchema& schema, const std::string& origin) {
  const CsvTable t = parse_csv(text, origin);
  std::vector<std::string> xs = schema.x_columns;
  if (xs.empty())
    for (const auto& h : t.header)
      if (!h.empty() && h[0] == 'x') xs.push_back(h);
  if (xs.empty()) throw std::invalid_argument(origin + ": no covariate columns");
  std::vector<std::size_t> xi;
  for (const auto& name : xs) xi.push_back(column_index(t, name, origin));
  const std::size_t yi = column_index(t, schema.y_column, origin);
  std::optional<std::size_t> di, zi;
  if (!schema.arm_column.empty()) di = column_index(t, schema.arm_column, origin);
  if (!schema.z_column.empty()) zi = column_index(t, schema.z_column, origin);

  Sample s;
  s.num_arms = schema.arm_column.empty() ? 1 : schema.num_arms;
  const std::size_t n = t.rows.size();
  s.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(xi.size()));
  s.arm.assign(n, 0);
  s.y.resize(n);
  if (zi) s.z.emplace(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < xi.size(); ++j)
      s.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = cell_number(t, r, xi[j], origin);
    s.y[r] = cell_number(t, r, yi, origin);
    if (zi) (*s.z)[r] = cell_number(t, r, *zi, origin);
    if (di) {
      const double a = cell_number(t, r, *di, origin);
      if (a != std::floor(a) || a < 0 || a >= s.num_arms) {
        std::ostringstream msg;
        msg << origin << ": line " << t.line_numbers[r] << " (data row " << r + 1 << "): arm label " << t.rows[r][*di]
            << " outside {0.." << s.num_arms - 1 << "}";
        throw std::invalid_argument(msg.str());
      }
      s.arm[r] = static_cast<int>(a);
    }
  }
  s.validate();
  return s;
}

Sample ingest_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  return ingest_csv_text(read_file(path), schema, path.string());
}

std::string emit_csv_text(const Sample& sample) {
  sample.validate();
  std::string out;
  for (std::size_t j = 0; j < sample.dim(); ++j) out += "x" + std::to_string(j + 1) + ",";
  out += "d,y";
  if (sample.z) out += ",z";
  out += "\n";
  for (std::size_t i = 0; i < sample.size(); ++i) {
    for (std::size_t j = 0; j < sample.dim(); ++j)
      out += format_double(sample.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) + ",";
    out += std::to_string(sample.arm[i]) + "," + format_double(sample.y[i]);
    if (sample.z) out += "," + format_double((*sample.z)[i]);
    out += "\n";
  }
  return out;
}

void emit_csv(const Sample& sample, const std::filesystem::path& path) {
  const std::string text = emit_csv_text(sample);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("cannot write " + path.string());
  out << text;
}

std::vector<double> read_csv_column(const std::filesystem::path& path, const std::string& column) {
  const CsvTable t = parse_csv(read_file(path), path.string());
  const std::size_t c = column_index(t, column, path.string());
  std::vector<double> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) out.push_back(cell_number(t, r, c, path.string()));
  return out;
}

bool RunRecord::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.second; });
}

std::string RunRecord::to_json() const {
  nlohmann::ordered_json j;
  j["task"] = task;
  j["config_hash"] = config_hash;
  j["git_describe"] = git_describe;
  j["seconds"] = seconds;
  nlohmann::ordered_json arts = nlohmann::ordered_json::array();
  for (const auto& a : artifacts) arts.push_back({{"path", a.path}, {"checksum", a.checksum}});
  j["artifacts"] = arts;
  nlohmann::ordered_json m = nlohmann::ordered_json::object();
  for (const auto& [k, v] : metrics) {
    if (!std::isfinite(v)) throw NonFiniteError("metric " + k + " is not finite");
    m[k] = v;
  }
  j["metrics"] = m;
  nlohmann::ordered_json c = nlohmann::ordered_json::object();
  for (const auto& [k, v] : checks) c[k] = v;
  j["checks"] = c;
  j["ok"] = ok();
  return j.dump(2);
}

OutputDir::OutputDir(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

OutputDir::~OutputDir() {
  if (committed_) return;
  std::error_code ec;
  for (const auto& p : written_) std::filesystem::remove(p, ec);
}

void OutputDir::write(const std::string& name, const std::string& contents) {
  const auto p = dir_ / name;
  {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::invalid_argument("cannot write " + p.string());
    written_.push_back(p);
    out << contents;
    if (!out) throw std::runtime_error("write failed for " + p.string());
  }
  artifacts_.push_back({name, checksum_hex(contents)});
}

}  // namespace optalloc
