#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace tte {

// Flat key=value config. '#' lines are comments, so a manifest written by a
// run re-parses as the config reproducing it.
class Config {
 public:
  static Config from_file(const std::string& path);
  static Config from_text(const std::string& text);

  bool has(const std::string& key) const;
  void set(const std::string& key, const std::string& value);

  // required getters throw ConfigError naming the missing key
  std::string get_str(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& def) const;
  int64_t get_int(const std::string& key) const;
  int64_t get_int(const std::string& key, int64_t def) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double def) const;
  bool get_bool(const std::string& key, bool def) const;

  // fail-fast against typos: any key outside `allowed` is an error
  void check_keys(const std::vector<std::string>& allowed, const std::string& command) const;

  const std::map<std::string, std::string>& raw() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

struct RunOutput {
  std::string report_csv;           // report.csv content as written
  std::string manifest;             // manifest.txt content as written
  std::vector<std::string> files;   // all paths written, report first
};

RunOutput cmd_synth(const Config& cfg, const std::string& out_dir);
RunOutput cmd_train(const Config& cfg, const std::string& out_dir);
RunOutput cmd_attack(const Config& cfg, const std::string& out_dir);
RunOutput cmd_ablate(const Config& cfg, const std::string& out_dir);
RunOutput cmd_heatmap(const Config& cfg, const std::string& out_dir);
RunOutput cmd_obfuscation(const Config& cfg, const std::string& out_dir);
RunOutput cmd_mismatch(const Config& cfg, const std::string& out_dir);
RunOutput cmd_certify(const Config& cfg, const std::string& out_dir);

// dispatch used by the CLI; seed_override, when given, replaces the config's
// seed before defaults are resolved
RunOutput run_command(const std::string& command, Config cfg, const std::string& out_dir,
                      const uint64_t* seed_override = nullptr);

std::vector<std::string> command_names();

}  // namespace tte
