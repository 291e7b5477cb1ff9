#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace tte {

inline constexpr const char* kToolVersion = "tte 1.0.0";

// FNV-1a 64 over the file bytes, as a fixed-width hex string
std::string fnv1a64_file(const std::string& path);

// temp-file + rename so readers never observe a partial file
void atomic_write_text(const std::string& path, const std::string& content);

std::string read_text(const std::string& path);

// fixed formats keep report bytes reproducible across runs
std::string fmt_acc(double v);   // accuracies, 6 decimals
std::string fmt_val(double v);   // radii, losses, bounds: shortest round-trip-ish %.9g

// manifest = comment header (command, version, hashes, transform strings)
// followed by the complete effective key=value config, sorted by key; the
// file re-parses as a config for bitwise reruns
std::string manifest_text(const std::string& command,
                          const std::vector<std::pair<std::string, std::string>>& info,
                          const std::map<std::string, std::string>& effective);

// minimal hand-rolled SVG artifacts; derived outputs, never parsed back
std::string svg_heatmap(const std::string& title, const std::vector<double>& grid9x9);
std::string svg_curves(const std::string& title, const std::vector<std::string>& legend,
                       const std::vector<std::vector<std::pair<double, double>>>& curves);

}  // namespace tte
