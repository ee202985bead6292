#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "circspace/circ_core.hpp"
#include "circspace/model_types.hpp"

namespace circspace::io {

/// Input problems: bad files, bad rows, bad configuration. Maps to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
  ValidationError(const std::string& head, const std::vector<std::string>& items)
      : std::runtime_error(join(head, items)), items_{items} {}

  [[nodiscard]] const std::vector<std::string>& items() const noexcept { return items_; }

 private:
  static std::string join(const std::string& head, const std::vector<std::string>& items) {
    std::string s = head;
    for (const auto& i : items) s += "\n  - " + i;
    return s;
  }
  std::vector<std::string> items_;
};

enum class AngleUnit { unspecified, degrees, radians };

[[nodiscard]] inline AngleUnit parse_angle_unit(std::string_view s) {
  if (s.empty() || s == "auto") return AngleUnit::unspecified;
  if (s == "degrees" || s == "deg") return AngleUnit::degrees;
  if (s == "radians" || s == "rad") return AngleUnit::radians;
  throw ValidationError("angle_unit must be 'degrees' or 'radians', got '" + std::string(s) + "'");
}

[[nodiscard]] inline std::string_view angle_unit_name(AngleUnit u) {
  switch (u) {
    case AngleUnit::degrees: return "degrees";
    case AngleUnit::radians: return "radians";
    default: return "auto";
  }
}

struct IngestOptions {
  AngleUnit angle_unit = AngleUnit::unspecified;
  bool rotate_180 = false;
  bool planar = false;  // accept lon/lat columns as planar coordinates
};

/// Shortest decimal form that reads back to the same double.
[[nodiscard]] inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::runtime_error("format_double failed");
  return std::string(buf, end);
}

[[nodiscard]] inline std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

namespace detail {

/// Split one CSV record. Double quotes protect commas; "" is a literal quote.
inline std::vector<std::string> split_csv(const std::string& line) {
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
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    s = b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  }
  return out;
}

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_no;

  [[nodiscard]] std::optional<std::size_t> find(std::initializer_list<std::string_view> names) const {
    for (auto n : names)
      for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == n) return i;
    return std::nullopt;
  }
};

inline Table read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  Table t;
  std::string line;
  std::size_t no = 0;
  std::vector<std::string> errors;
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line.front() == '#') continue;
    auto fields = split_csv(line);
    if (t.header.empty()) {
      for (auto& f : fields) f = lower(f);
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size()) {
      errors.push_back("line " + std::to_string(no) + ": expected " + std::to_string(t.header.size()) + " fields, found " +
                       std::to_string(fields.size()));
      continue;
    }
    t.rows.push_back(std::move(fields));
    t.line_no.push_back(no);
  }
  if (t.header.empty()) throw ValidationError("'" + path + "' has no header line");
  if (!errors.empty()) throw ValidationError("malformed rows in '" + path + "':", errors);
  return t;
}

/// Site columns shared by data, target and truth files.
struct SiteColumns {
  std::optional<std::size_t> id;
  std::size_t x = 0;
  std::size_t y = 0;
  std::optional<std::size_t> time;
};

inline SiteColumns site_columns(const Table& t, const std::string& path, bool planar) {
  SiteColumns c;
  c.id = t.find({"site_id", "id", "site"});
  c.time = t.find({"time", "t"});
  const auto x = t.find({"x", "easting"});
  const auto y = t.find({"y", "northing"});
  if (x && y) {
    c.x = *x;
    c.y = *y;
    return c;
  }
  const auto lon = t.find({"lon", "longitude"});
  const auto lat = t.find({"lat", "latitude"});
  if (lon && lat) {
    if (!planar)
      throw ValidationError("'" + path +
                            "' has lon/lat columns; project them to planar coordinates first, or set "
                            "data.planar = true if they already are planar");
    c.x = *lon;
    c.y = *lat;
    return c;
  }
  throw ValidationError("'" + path + "' needs coordinate columns x and y");
}

inline SiteSet read_site_rows(const Table& t, const SiteColumns& c, std::vector<std::string>& errors) {
  SiteSet s;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = "line " + std::to_string(t.line_no[r]);
    s.ids.push_back(c.id ? row[*c.id] : std::to_string(r + 1));
    const auto x = parse_double(row[c.x]);
    const auto y = parse_double(row[c.y]);
    if (!x || !std::isfinite(*x) || !y || !std::isfinite(*y)) errors.push_back(where + ": coordinates must be finite numbers");
    s.coords.push_back({x.value_or(0.0), y.value_or(0.0)});
    if (c.time) {
      const auto tm = parse_double(row[*c.time]);
      if (!tm || !std::isfinite(*tm)) errors.push_back(where + ": time must be a finite number");
      s.times.push_back(tm.value_or(0.0));
    }
  }
  return s;
}

}  // namespace detail

/// Read a dataset: site_id, x, y, optional time, a direction column
/// (direction, direction_deg or direction_rad) and optional speed.
[[nodiscard]] inline CircularDataset ingest(const std::string& path, const IngestOptions& opts = {}) {
  const auto t = detail::read_table(path);
  const auto cols = detail::site_columns(t, path, opts.planar);

  AngleUnit unit = opts.angle_unit;
  std::optional<std::size_t> dir;
  if (auto c = t.find({"direction_deg"})) {
    if (unit == AngleUnit::radians) throw ValidationError("'" + path + "': column direction_deg conflicts with angle_unit = radians");
    dir = c;
    unit = AngleUnit::degrees;
  } else if (auto c2 = t.find({"direction_rad"})) {
    if (unit == AngleUnit::degrees) throw ValidationError("'" + path + "': column direction_rad conflicts with angle_unit = degrees");
    dir = c2;
    unit = AngleUnit::radians;
  } else {
    dir = t.find({"direction", "angle", "theta"});
  }
  if (!dir) throw ValidationError("'" + path + "' needs a direction column (direction, direction_deg or direction_rad)");
  const auto speed_col = t.find({"speed"});

  std::vector<std::string> errors;
  CircularDataset d;
  d.sites = detail::read_site_rows(t, cols, errors);
  std::vector<double> raw;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = "line " + std::to_string(t.line_no[r]);
    const auto v = parse_double(row[*dir]);
    if (!v) {
      errors.push_back(where + (row[*dir].empty() ? ": missing direction" : ": direction is not a number"));
      raw.push_back(0.0);
    } else if (!std::isfinite(*v)) {
      errors.push_back(where + ": direction must be finite");
      raw.push_back(0.0);
    } else {
      raw.push_back(*v);
    }
    if (speed_col) {
      const auto s = parse_double(row[*speed_col]);
      if (!s || !std::isfinite(*s)) errors.push_back(where + ": speed must be a finite number");
      d.speed.push_back(s.value_or(0.0));
    }
  }
  if (unit == AngleUnit::unspecified) {
    const double biggest = raw.empty() ? 0.0 : std::abs(*std::max_element(raw.begin(), raw.end(), [](double a, double b) {
      return std::abs(a) < std::abs(b);
    }));
    if (biggest > kTwoPi * 1.001)
      errors.push_back("directions exceed 2*pi; set data.angle_unit to 'degrees' (or 'radians' to reject them)");
    unit = AngleUnit::radians;
  }
  const double limit = unit == AngleUnit::degrees ? 360.0 : kTwoPi;
  const double scale = unit == AngleUnit::degrees ? kPi / 180.0 : 1.0;
  for (std::size_t r = 0; r < raw.size(); ++r) {
    if (std::abs(raw[r]) > limit) {
      errors.push_back("line " + std::to_string(t.line_no[r]) + ": direction " + format_double(raw[r]) + " lies outside [-" +
                       (unit == AngleUnit::degrees ? std::string("360, 360] degrees") : std::string("2pi, 2pi] radians")));
      continue;
    }
    if (unit == AngleUnit::degrees) {
      // rotate and reduce in degrees so 180 + 180 lands exactly on 0
      double deg = raw[r] + (opts.rotate_180 ? 180.0 : 0.0);
      deg -= 360.0 * std::floor(deg / 360.0);
      d.angles.emplace_back(deg * scale);
    } else {
      d.angles.emplace_back(opts.rotate_180 ? raw[r] + kPi : raw[r]);
    }
  }
  if (t.rows.empty()) errors.push_back("no data rows");
  if (!errors.empty()) throw ValidationError("invalid dataset '" + path + "':", errors);
  d.validate();
  return d;
}

/// Read prediction targets: site_id, x, y, optional time.
[[nodiscard]] inline SiteSet read_sites(const std::string& path, bool planar = false) {
  const auto t = detail::read_table(path);
  const auto cols = detail::site_columns(t, path, planar);
  std::vector<std::string> errors;
  SiteSet s = detail::read_site_rows(t, cols, errors);
  if (t.rows.empty()) errors.push_back("no site rows");
  if (!errors.empty()) throw ValidationError("invalid site file '" + path + "':", errors);
  return s;
}

/// Write a dataset in the layout `ingest` reads back exactly (radians).
inline void write_dataset(const std::string& path, const CircularDataset& d) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << "site_id,x,y";
  if (d.temporal()) out << ",time";
  out << ",direction_rad";
  if (!d.speed.empty()) out << ",speed";
  out << '\n';
  for (std::size_t i = 0; i < d.size(); ++i) {
    out << (d.sites.ids.empty() ? std::to_string(i + 1) : d.sites.ids[i]) << ',' << format_double(d.sites.coords[i].x) << ','
        << format_double(d.sites.coords[i].y);
    if (d.temporal()) out << ',' << format_double(d.sites.times[i]);
    out << ',' << format_double(d.angles[i].value());
    if (!d.speed.empty()) out << ',' << format_double(d.speed[i]);
    out << '\n';
  }
}

inline void write_sites(const std::string& path, const SiteSet& s) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << "site_id,x,y" << (s.temporal() ? ",time" : "") << '\n';
  for (std::size_t i = 0; i < s.size(); ++i) {
    out << (s.ids.empty() ? std::to_string(i + 1) : s.ids[i]) << ',' << format_double(s.coords[i].x) << ','
        << format_double(s.coords[i].y);
    if (s.temporal()) out << ',' << format_double(s.times[i]);
    out << '\n';
  }
}

}  // namespace circspace::io
