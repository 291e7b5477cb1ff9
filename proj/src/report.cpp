#include "tte/report.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tte/errors.hpp"

namespace tte {

std::string fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("fnv1a64_file: cannot open " + path);
  uint64_t h = 1469598103934665603ull;
  char buf[4096];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
    if (!in) break;
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

void atomic_write_text(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("atomic_write_text: cannot open " + tmp);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw DataError("atomic_write_text: short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw DataError("atomic_write_text: rename failed for " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("read_text: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt_acc(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fmt_val(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string manifest_text(const std::string& command,
                          const std::vector<std::pair<std::string, std::string>>& info,
                          const std::map<std::string, std::string>& effective) {
  std::string out;
  out += "# tte manifest\n";
  out += "# command: " + command + "\n";
  out += "# tool_version: " + std::string(kToolVersion) + "\n";
  for (const auto& [k, v] : info) out += "# " + k + ": " + v + "\n";
  for (const auto& [k, v] : effective) out += k + "=" + v + "\n";
  return out;
}

namespace {

// blue -> yellow ramp over [0,1]
std::string ramp(double v) {
  v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  int r = static_cast<int>(40 + 215 * v);
  int g = static_cast<int>(60 + 180 * v);
  int b = static_cast<int>(160 - 120 * v);
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

std::string svg_heatmap(const std::string& title, const std::vector<double>& grid9x9) {
  if (grid9x9.size() != 81) throw ConfigError("svg_heatmap: grid must have 81 cells");
  std::ostringstream s;
  const int cell = 40, m = 50;
  s << "<svg xmlns='http://www.w3.org/2000/svg' width='" << (2 * m + 9 * cell) << "' height='"
    << (2 * m + 9 * cell + 20) << "'>\n";
  s << "<text x='" << m << "' y='30' font-size='16'>" << title << "</text>\n";
  for (int oy = 0; oy < 9; ++oy) {
    for (int ox = 0; ox < 9; ++ox) {
      double v = grid9x9[oy * 9 + ox];
      s << "<rect x='" << (m + ox * cell) << "' y='" << (m + oy * cell) << "' width='" << cell
        << "' height='" << cell << "' fill='" << ramp(v) << "'/>\n";
      s << "<text x='" << (m + ox * cell + 4) << "' y='" << (m + oy * cell + 24)
        << "' font-size='10'>" << fmt_acc(v).substr(0, 5) << "</text>\n";
    }
  }
  s << "</svg>\n";
  return s.str();
}

std::string svg_curves(const std::string& title, const std::vector<std::string>& legend,
                       const std::vector<std::vector<std::pair<double, double>>>& curves) {
  if (curves.empty() || legend.size() != curves.size())
    throw ConfigError("svg_curves: need one legend entry per curve");
  double rmax = 1e-9;
  for (const auto& c : curves)
    for (const auto& [r, v] : c) rmax = r > rmax ? r : rmax;
  const int w = 420, h = 300, m = 45;
  std::ostringstream s;
  s << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
  s << "<text x='" << m << "' y='20' font-size='14'>" << title << "</text>\n";
  s << "<rect x='" << m << "' y='" << m << "' width='" << (w - 2 * m) << "' height='"
    << (h - 2 * m) << "' fill='none' stroke='#333'/>\n";
  for (size_t c = 0; c < curves.size(); ++c) {
    s << "<polyline fill='none' stroke='" << kPalette[c % 6] << "' stroke-width='2' points='";
    for (const auto& [r, v] : curves[c]) {
      double x = m + (w - 2 * m) * (r / rmax);
      double y = h - m - (h - 2 * m) * v;
      s << x << "," << y << " ";
    }
    s << "'/>\n";
    s << "<text x='" << (m + 8) << "' y='" << (m + 18 + 16 * c) << "' font-size='12' fill='"
      << kPalette[c % 6] << "'>" << legend[c] << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace tte
