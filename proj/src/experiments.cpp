#include "tte/experiments.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tte/attacks.hpp"
#include "tte/dataset.hpp"
#include "tte/ensemble.hpp"
#include "tte/errors.hpp"
#include "tte/model.hpp"
#include "tte/report.hpp"
#include "tte/smoothing.hpp"
#include "tte/train.hpp"
#include "tte/transforms.hpp"

namespace tte {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string canon_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double_strict(const std::string& key, const std::string& v) {
  char* end = nullptr;
  double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size())
    throw ConfigError("config: key '" + key + "' is not a number: '" + v + "'");
  return d;
}

int64_t parse_int_strict(const std::string& key, const std::string& v) {
  char* end = nullptr;
  long long i = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size())
    throw ConfigError("config: key '" + key + "' is not an integer: '" + v + "'");
  return i;
}

// reads config values, applying defaults, while collecting the effective
// key=value pairs that the manifest pins
struct Eff {
  const Config& cfg;
  std::map<std::string, std::string> kv;

  explicit Eff(const Config& c) : cfg(c) {}
  std::string sreq(const std::string& k) {
    std::string v = cfg.get_str(k);
    kv[k] = v;
    return v;
  }
  std::string s(const std::string& k, const std::string& def) {
    std::string v = cfg.get_str(k, def);
    kv[k] = v;
    return v;
  }
  int64_t i(const std::string& k, int64_t def) {
    int64_t v = cfg.get_int(k, def);
    kv[k] = std::to_string(v);
    return v;
  }
  double d(const std::string& k, double def) {
    double v = cfg.get_double(k, def);
    kv[k] = canon_double(v);
    return v;
  }
  double dreq(const std::string& k) {
    double v = cfg.get_double(k);
    kv[k] = canon_double(v);
    return v;
  }
  bool b(const std::string& k, bool def) {
    bool v = cfg.get_bool(k, def);
    kv[k] = v ? "1" : "0";
    return v;
  }
  uint64_t seed() {
    int64_t v = cfg.get_int("seed", 0);
    kv["seed"] = std::to_string(v);
    return static_cast<uint64_t>(v);
  }
};

Dataset eval_data(const std::string& path, int64_t eval_count) {
  Dataset ds = load(path);
  if (eval_count < 0) throw ConfigError("config: eval_count must be >= 0");
  if (eval_count > 0) {
    if (eval_count > ds.b())
      throw ConfigError("config: eval_count exceeds dataset size " + std::to_string(ds.b()));
    ds = take(ds, static_cast<int>(eval_count));
  }
  return ds;
}

std::vector<SuiteAttack> desk_suite(double eps, int steps, int square_queries, uint64_t seed) {
  AttackConfig g;
  g.epsilon = eps;
  g.steps = steps;
  g.seed = seed;
  AttackConfig sq = g;
  sq.steps = square_queries;
  return {{AttackKind::APGD_CE, g}, {AttackKind::APGD_T, g}, {AttackKind::Square, sq}};
}

struct Writer {
  std::string out_dir;
  RunOutput run;
  explicit Writer(std::string dir) : out_dir(std::move(dir)) {
    std::filesystem::create_directories(out_dir);
  }
  void file(const std::string& name, const std::string& content) {
    const std::string path = out_dir + "/" + name;
    atomic_write_text(path, content);
    run.files.push_back(path);
  }
  RunOutput finish(const std::string& command, std::vector<std::pair<std::string, std::string>> info,
                   const std::map<std::string, std::string>& eff, const std::string& csv,
                   std::vector<std::pair<std::string, std::string>> extra_files = {}) {
    run.report_csv = csv;
    run.manifest = manifest_text(command, std::move(info), eff);
    std::vector<std::string> pre = std::move(run.files);  // artifacts written before the report
    run.files.clear();
    file("report.csv", csv);
    file("manifest.txt", run.manifest);
    for (auto& [name, content] : extra_files) file(name, content);
    run.files.insert(run.files.end(), pre.begin(), pre.end());
    return std::move(run);
  }
};

TrainConfig train_config_from(Eff& e, const std::string& regime_str) {
  TrainConfig tc;
  tc.regime = regime_from_name(regime_str);
  tc.epochs = static_cast<int>(e.i("epochs", 10));
  tc.batch_size = static_cast<int>(e.i("batch_size", 50));
  tc.lr = e.d("lr", 0.05);
  tc.momentum = e.d("momentum", 0.9);
  tc.seed = e.seed();
  tc.train_flip = e.b("train_flip", true);
  tc.train_padcrop = e.b("train_padcrop", true);
  tc.pad = static_cast<int>(e.i("pad", 4));
  if (tc.regime == Regime::Gaussian || tc.regime == Regime::SmoothAdv) {
    if (!e.cfg.has("sigma"))
      throw ConfigError("train: regime=" + regime_str + " requires key 'sigma'");
    tc.sigma = e.dreq("sigma");
  } else {
    tc.sigma = e.d("sigma", tc.sigma);
  }
  tc.epsilon = e.d("epsilon", tc.epsilon);
  tc.attack_steps = static_cast<int>(e.i("attack_steps", 7));
  tc.attack_step_size = e.d("attack_step_size", 0.0);
  return tc;
}

}  // namespace

Config Config::from_text(const std::string& text) {
  Config c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + " is not key=value: '" + t +
                        "'");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw ConfigError("config: empty key on line " + std::to_string(lineno));
    if (c.kv_.count(key)) throw ConfigError("config: duplicate key '" + key + "'");
    c.kv_[key] = value;
  }
  return c;
}

Config Config::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

bool Config::has(const std::string& key) const { return kv_.count(key) > 0; }

void Config::set(const std::string& key, const std::string& value) { kv_[key] = value; }

std::string Config::get_str(const std::string& key) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) throw ConfigError("config: missing required key '" + key + "'");
  return it->second;
}

std::string Config::get_str(const std::string& key, const std::string& def) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? def : it->second;
}

int64_t Config::get_int(const std::string& key) const {
  return parse_int_strict(key, get_str(key));
}

int64_t Config::get_int(const std::string& key, int64_t def) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? def : parse_int_strict(key, it->second);
}

double Config::get_double(const std::string& key) const {
  return parse_double_strict(key, get_str(key));
}

double Config::get_double(const std::string& key, double def) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? def : parse_double_strict(key, it->second);
}

bool Config::get_bool(const std::string& key, bool def) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  const std::string& v = it->second;
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ConfigError("config: key '" + key + "' is not a bool: '" + v + "'");
}

void Config::check_keys(const std::vector<std::string>& allowed,
                        const std::string& command) const {
  for (const auto& [k, v] : kv_) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      throw ConfigError("config: unknown key '" + k + "' for command " + command);
  }
}

RunOutput cmd_synth(const Config& cfg, const std::string& out_dir) {
  cfg.check_keys({"count", "classes", "h", "w", "seed", "split"}, "synth");
  Eff e(cfg);
  int64_t count = cfg.get_int("count");
  e.kv["count"] = std::to_string(count);
  int classes = static_cast<int>(e.i("classes", 4));
  int h = static_cast<int>(e.i("h", 24));
  int w = static_cast<int>(e.i("w", 24));
  uint64_t seed = e.seed();
  double frac = e.d("split", 0.0);

  Dataset ds = generate(static_cast<int>(count), classes, h, w, seed);
  Writer wr{out_dir};
  std::string csv = "file,count,classes,h,w\n";
  std::vector<std::pair<std::string, std::string>> info;
  auto emit = [&](const std::string& name, const Dataset& d) {
    save(d, out_dir + "/" + name);
    wr.run.files.push_back(out_dir + "/" + name);
    csv += name + "," + std::to_string(d.b()) + "," + std::to_string(d.num_classes) + "," +
           std::to_string(d.h()) + "," + std::to_string(d.w()) + "\n";
    info.emplace_back(name + "_fnv1a", fnv1a64_file(out_dir + "/" + name));
  };
  if (frac > 0.0) {
    auto [tr, te] = split(ds, frac, seed);
    emit("train.tted", tr);
    emit("test.tted", te);
  } else {
    emit("dataset.tted", ds);
  }
  return wr.finish("synth", info, e.kv, csv);
}

RunOutput cmd_train(const Config& cfg, const std::string& out_dir) {
  cfg.check_keys({"dataset", "regime", "epochs", "batch_size", "lr", "momentum", "seed",
                  "train_flip", "train_padcrop", "pad", "epsilon", "attack_steps",
                  "attack_step_size", "sigma"},
                 "train");
  Eff e(cfg);
  std::string data_path = e.sreq("dataset");
  std::string regime_str = e.sreq("regime");
  TrainConfig tc = train_config_from(e, regime_str);

  Dataset tr = load(data_path);
  Classifier m(tr.c(), tr.h(), tr.w(), tr.num_classes, tc.seed);
  TrainResult res = train(m, tr, tc);
  Writer wr{out_dir};
  save_checkpoint(m, out_dir + "/model.ckpt");

  std::string csv = "epoch,loss\n";
  for (size_t i = 0; i < res.epoch_loss.size(); ++i)
    csv += std::to_string(i) + "," + fmt_val(res.epoch_loss[i]) + "\n";

  wr.run.files.push_back(out_dir + "/model.ckpt");
  return wr.finish("train",
                   {{"dataset_fnv1a", fnv1a64_file(data_path)},
                    {"checkpoint_out_fnv1a", fnv1a64_file(out_dir + "/model.ckpt")}},
                   e.kv, csv);
}

RunOutput cmd_attack(const Config& cfg, const std::string& out_dir) {
  cfg.check_keys({"checkpoint", "dataset", "transform_set", "pad", "epsilon", "steps",
                  "square_queries", "eval_count", "seed"},
                 "attack");
  Eff e(cfg);
  std::string ckpt = e.sreq("checkpoint");
  std::string data_path = e.sreq("dataset");
  std::string set_name = e.s("transform_set", "flip+1crop");
  int pad = static_cast<int>(e.i("pad", 4));
  double eps = e.d("epsilon", 8.0 / 255.0);
  int steps = static_cast<int>(e.i("steps", 20));
  int squareq = static_cast<int>(e.i("square_queries", 200));
  int64_t eval_count = e.i("eval_count", 0);
  uint64_t seed = e.seed();

  Classifier m = load_checkpoint(ckpt);
  Dataset ds = eval_data(data_path, eval_count);
  std::vector<TransformSpec> specs = named_set(set_name, pad, seed);
  EnsembleModel tte = EnsembleModel::wrap(m, specs);
  auto suite = desk_suite(eps, steps, squareq, seed);
  RobustReport base = robust_accuracy(m, ds, suite);
  RobustReport wrapped = robust_accuracy(tte, ds, suite);

  std::string csv = "model,clean,apgd-ce,apgd-t,square,robust,difference\n";
  auto row = [&](const std::string& name, const RobustReport& r, double diff) {
    csv += name + "," + fmt_acc(r.clean_accuracy);
    for (const auto& [an, acc] : r.per_attack) csv += "," + fmt_acc(acc);
    csv += "," + fmt_acc(r.robust_accuracy) + "," + fmt_acc(diff) + "\n";
  };
  row("base", base, 0.0);
  row("tte", wrapped, wrapped.robust_accuracy - base.robust_accuracy);

  Writer wr{out_dir};
  return wr.finish("attack",
                   {{"checkpoint_fnv1a", fnv1a64_file(ckpt)},
                    {"dataset_fnv1a", fnv1a64_file(data_path)},
                    {"transforms", serialize(tte.transforms())}},
                   e.kv, csv);
}

RunOutput cmd_ablate(const Config& cfg, const std::string& out_dir) {
  cfg.check_keys({"checkpoint", "dataset", "pad", "epsilon", "steps", "square_queries",
                  "eval_count", "seed"},
                 "ablate");
  Eff e(cfg);
  std::string ckpt = e.sreq("checkpoint");
  std::string data_path = e.sreq("dataset");
  int pad = static_cast<int>(e.i("pad", 4));
  double eps = e.d("epsilon", 8.0 / 255.0);
  int steps = static_cast<int>(e.i("steps", 20));
  int squareq = static_cast<int>(e.i("square_queries", 200));
  int64_t eval_count = e.i("eval_count", 0);
  uint64_t seed = e.seed();

  Classifier m = load_checkpoint(ckpt);
  Dataset ds = eval_data(data_path, eval_count);
  auto suite = desk_suite(eps, steps, squareq, seed);

  std::string csv = "set,clean,robust,diff\n";
  double base_robust = 0.0;
  int positive = 0, rows = 0;
  std::vector<std::pair<std::string, std::string>> info = {
      {"checkpoint_fnv1a", fnv1a64_file(ckpt)}, {"dataset_fnv1a", fnv1a64_file(data_path)}};
  for (const std::string& name : named_set_names()) {
    EnsembleModel tte = EnsembleModel::wrap(m, named_set(name, pad, seed));
    RobustReport r = robust_accuracy(tte, ds, suite);
    if (name == "none") base_robust = r.robust_accuracy;
    double diff = r.robust_accuracy - base_robust;
    if (name != "none") {
      ++rows;
      positive += diff > 0.0 ? 1 : 0;
    }
    csv += name + "," + fmt_acc(r.clean_accuracy) + "," + fmt_acc(r.robust_accuracy) + "," +
           fmt_acc(diff) + "\n";
    info.emplace_back("transforms_" + name, serialize(tte.transforms()));
  }
  csv += "positive_diff_fraction," + fmt_acc(static_cast<double>(positive) / rows) + ",,\n";

  Writer wr{out_dir};
  return wr.finish("ablate", info, e.kv, csv);
}

RunOutput cmd_heatmap(const Config& cfg, const std::string& out_dir) {
  cfg.check_keys({"checkpoint", "dataset", "mode", "epsilon", "steps", "eval_count", "seed",
                  "svg"},
                 "heatmap");
  Eff e(cfg);
  std::string ckpt = e.sreq("checkpoint");
  std::string data_path = e.sreq("dataset");
  std::string mode = e.s("mode", "both");
  double eps = e.d("epsilon", 8.0 / 255.0);
  int steps = static_cast<int>(e.i("steps", 20));
  int64_t eval_count = e.i("eval_count", 0);
  uint64_t seed = e.seed();
  bool svg = e.b("svg", true);
  if (mode != "both" && mode != "crop_only" && mode != "original_plus_crop")
    throw ConfigError("heatmap: mode must be crop_only, original_plus_crop or both");

  Classifier m = load_checkpoint(ckpt);
  Dataset ds = eval_data(data_path, eval_count);
  AttackConfig ac;
  ac.epsilon = eps;
  ac.steps = steps;
  ac.seed = seed;
  const std::vector<SuiteAttack> suite = {{AttackKind::APGD_CE, ac}};
  const int pad = 4;  // the 9x9 grid is (2*pad+1)^2
  std::vector<TransformSpec> crops = enumerate_crops(pad);

  std::vector<std::string> modes;
  if (mode == "both" || mode == "crop_only") modes.push_back("crop_only");
  if (mode == "both" || mode == "original_plus_crop") modes.push_back("original_plus_crop");

  std::string csv = "mode,metric,o_x,o_y,value\n";
  std::vector<std::pair<std::string, std::string>> svgs;
  for (const std::string& md : modes) {
    std::vector<double> clean_grid(81), robust_grid(81);
    for (size_t c = 0; c < crops.size(); ++c) {
      const TransformSpec& spec = crops[c];
      if (md == "crop_only") {
        ComposedModel view(m, spec);
        clean_grid[c] = evaluate_clean(view, ds);
        robust_grid[c] = robust_accuracy(view, ds, suite).robust_accuracy;
      } else {
        EnsembleModel view = EnsembleModel::wrap(m, {spec});
        clean_grid[c] = evaluate_clean(view, ds);
        robust_grid[c] = robust_accuracy(view, ds, suite).robust_accuracy;
      }
    }
    for (int metric = 0; metric < 2; ++metric) {
      const std::vector<double>& grid = metric == 0 ? clean_grid : robust_grid;
      const std::string mname = metric == 0 ? "clean" : "robust";
      for (size_t c = 0; c < crops.size(); ++c)
        csv += md + "," + mname + "," + std::to_string(crops[c].o_x) + "," +
               std::to_string(crops[c].o_y) + "," + fmt_acc(grid[c]) + "\n";
      double asym = 0.0;  // left-right mirror residual of the 9x9 grid
      for (int oy = 0; oy < 9; ++oy)
        for (int ox = 0; ox < 9; ++ox)
          asym += std::abs(grid[oy * 9 + ox] - grid[oy * 9 + (8 - ox)]);
      csv += md + ",asymmetry_" + mname + ",,," + fmt_acc(asym / 81.0) + "\n";
      if (svg)
        svgs.emplace_back("heatmap_" + md + "_" + mname + ".svg",
                          svg_heatmap(md + " " + mname, grid));
    }
  }

  Writer wr{out_dir};
  return wr.finish("heatmap",
                   {{"checkpoint_fnv1a", fnv1a64_file(ckpt)},
                    {"dataset_fnv1a", fnv1a64_file(data_path)}},
                   e.kv, csv, svgs);
}

RunOutput cmd_obfuscation(const Config& cfg, const std::string& out_dir) {
  cfg.check_keys({"checkpoint", "dataset", "transform_set", "pad", "fixed_epsilon",
                  "fixed_steps", "eval_count", "seed"},
                 "obfuscation");
  Eff e(cfg);
  std::string ckpt = e.sreq("checkpoint");
  std::string data_path = e.sreq("dataset");
  std::string set_name = e.s("transform_set", "flip+4crops+4flipped");
  int pad = static_cast<int>(e.i("pad", 4));
  double fixed_eps = e.d("fixed_epsilon", 8.0 / 255.0);
  int fixed_steps = static_cast<int>(e.i("fixed_steps", 20));
  int64_t eval_count = e.i("eval_count", 0);
  uint64_t seed = e.seed();

  Classifier m = load_checkpoint(ckpt);
  Dataset ds = eval_data(data_path, eval_count);
  EnsembleModel tte = EnsembleModel::wrap(m, named_set(set_name, pad, seed));
  const std::vector<int> iter_grid = {5, 10, 50, 100};
  const std::vector<double> eps_grid = {8.0 / 255, 16.0 / 255, 32.0 / 255, 64.0 / 255};
  AttackConfig base;
  base.seed = seed;

  std::string csv = "model,axis,point,accuracy\n";
  auto rows = [&](const std::string& name, const ScoreModel& model) {
    ObfuscationSweep sw =
        obfuscation_sweep(model, ds, iter_grid, eps_grid, fixed_eps, fixed_steps, base);
    for (auto& [it, acc] : sw.by_iterations)
      csv += name + ",iterations," + std::to_string(it) + "," + fmt_acc(acc) + "\n";
    for (auto& [ev, acc] : sw.by_epsilon)
      csv += name + ",epsilon," + fmt_val(ev) + "," + fmt_acc(acc) + "\n";
  };
  rows("base", m);
  rows("tte", tte);

  Writer wr{out_dir};
  return wr.finish("obfuscation",
                   {{"checkpoint_fnv1a", fnv1a64_file(ckpt)},
                    {"dataset_fnv1a", fnv1a64_file(data_path)},
                    {"transforms", serialize(tte.transforms())}},
                   e.kv, csv);
}

RunOutput cmd_mismatch(const Config& cfg, const std::string& out_dir) {
  cfg.check_keys({"variant", "train_dataset", "dataset", "regime", "epochs", "batch_size", "lr",
                  "momentum", "seed", "train_flip", "train_padcrop", "pad", "epsilon",
                  "attack_steps", "attack_step_size", "sigma", "steps", "eval_count"},
                 "mismatch");
  Eff e(cfg);
  std::string variant = e.sreq("variant");
  if (variant != "gaussian_test" && variant != "no_crop_train" && variant != "no_flip_train")
    throw ConfigError("mismatch: variant must be gaussian_test, no_crop_train or no_flip_train");
  std::string train_path = e.sreq("train_dataset");
  std::string data_path = e.sreq("dataset");
  std::string regime_str = e.s("regime", "adversarial");
  int steps = static_cast<int>(e.i("steps", 20));
  int64_t eval_count = e.i("eval_count", 0);

  TrainConfig tc = train_config_from(e, regime_str);
  int pad = tc.pad;
  // the variant overrides an augmentation flag; the manifest records the
  // overridden value so reruns see the configuration that actually trained
  if (variant == "no_crop_train") {
    tc.train_padcrop = false;
    e.kv["train_padcrop"] = "0";
  }
  if (variant == "no_flip_train") {
    tc.train_flip = false;
    e.kv["train_flip"] = "0";
  }

  Dataset tr = load(train_path);
  Dataset ds = eval_data(data_path, eval_count);
  Classifier m(tr.c(), tr.h(), tr.w(), tr.num_classes, tc.seed);
  train(m, tr, tc);

  AttackConfig ac;
  ac.epsilon = tc.epsilon;
  ac.steps = steps;
  ac.seed = tc.seed;
  const std::vector<SuiteAttack> suite = {{AttackKind::APGD_CE, ac}};
  RobustReport base = robust_accuracy(m, ds, suite);

  std::string csv = "row,clean,robust,diff\n";
  std::vector<std::pair<std::string, std::string>> info = {
      {"train_dataset_fnv1a", fnv1a64_file(train_path)},
      {"dataset_fnv1a", fnv1a64_file(data_path)},
      {"base_clean", fmt_acc(base.clean_accuracy)},
      {"base_robust", fmt_acc(base.robust_accuracy)}};
  auto tte_row = [&](const std::string& label, const std::vector<TransformSpec>& specs) {
    EnsembleModel tte = EnsembleModel::wrap(m, specs);
    RobustReport r = robust_accuracy(tte, ds, suite);
    csv += label + "," + fmt_acc(r.clean_accuracy) + "," + fmt_acc(r.robust_accuracy) + "," +
           fmt_acc(r.robust_accuracy - base.robust_accuracy) + "\n";
    info.emplace_back("transforms_" + label, serialize(tte.transforms()));
  };

  if (variant == "gaussian_test") {
    for (int k : {3, 5})
      for (double sg : {1.0, 2.0})
        tte_row("gaussian_k" + std::to_string(k) + "_s" + std::to_string(int(sg)),
                {TransformSpec::gaussian(k, sg)});
  } else {
    csv += "no_tte," + fmt_acc(base.clean_accuracy) + "," + fmt_acc(base.robust_accuracy) +
           "," + fmt_acc(0.0) + "\n";
    if (variant == "no_crop_train") {
      for (const char* name : {"1crop", "2crops", "3crops", "4crops"})
        tte_row(name, named_set(name, pad, tc.seed));
    } else {
      tte_row("flip", named_set("flip", pad, tc.seed));
    }
  }

  Writer wr{out_dir};
  return wr.finish("mismatch", info, e.kv, csv);
}

RunOutput cmd_certify(const Config& cfg, const std::string& out_dir) {
  cfg.check_keys({"checkpoint", "dataset", "sigmas", "n0", "n", "alpha", "batch",
                  "transform_set", "pad", "eval_count", "seed", "r_max", "r_step", "svg"},
                 "certify");
  Eff e(cfg);
  std::string ckpt = e.sreq("checkpoint");
  std::string data_path = e.sreq("dataset");
  std::string sigmas_str = e.s("sigmas", "0.12,0.25,0.5");
  std::string set_name = e.s("transform_set", "flip");
  int pad = static_cast<int>(e.i("pad", 4));
  SmoothingConfig sc;
  sc.n0 = static_cast<int>(e.i("n0", 32));
  sc.n = static_cast<int>(e.i("n", 1000));
  sc.alpha = e.d("alpha", 0.001);
  sc.batch = static_cast<int>(e.i("batch", 128));
  sc.seed = e.seed();
  int64_t eval_count = e.i("eval_count", 0);
  double r_max = e.d("r_max", 2.0);
  double r_step = e.d("r_step", 0.05);
  bool svg = e.b("svg", true);
  if (!(r_step > 0.0) || !(r_max > 0.0)) throw ConfigError("certify: r_max, r_step must be > 0");

  std::vector<std::string> sigma_tokens;
  std::vector<double> sigmas;
  {
    std::istringstream ss(sigmas_str);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      tok = trim(tok);
      if (tok.empty()) continue;
      sigma_tokens.push_back(tok);
      sigmas.push_back(parse_double_strict("sigmas", tok));
    }
    if (sigmas.empty()) throw ConfigError("certify: sigmas list is empty");
  }

  Classifier m = load_checkpoint(ckpt);
  Dataset ds = eval_data(data_path, eval_count);
  EnsembleModel tte = EnsembleModel::wrap(m, named_set(set_name, pad, sc.seed));

  std::vector<double> grid;
  for (int i = 0; r_step * i <= r_max + 1e-12; ++i) grid.push_back(r_step * i);

  std::string csv = "kind,sigma,model,r,value\n";
  std::vector<Curve> base_curves, tte_curves;
  std::vector<std::pair<std::string, std::string>> svgs;
  for (size_t si = 0; si < sigmas.size(); ++si) {
    sc.sigma = sigmas[si];
    auto rs_base = certify_set(m, ds, sc);
    auto rs_tte = certify_set(tte, ds, sc);
    base_curves.push_back(certified_curve(rs_base, grid));
    tte_curves.push_back(certified_curve(rs_tte, grid));
    double acr_base = acr(rs_base), acr_tte = acr(rs_tte);
    for (const auto& [r, v] : base_curves.back())
      csv += "curve," + fmt_val(sc.sigma) + ",base," + fmt_val(r) + "," + fmt_acc(v) + "\n";
    for (const auto& [r, v] : tte_curves.back())
      csv += "curve," + fmt_val(sc.sigma) + ",tte," + fmt_val(r) + "," + fmt_acc(v) + "\n";
    csv += "acr," + fmt_val(sc.sigma) + ",base,," + fmt_val(acr_base) + "\n";
    csv += "acr," + fmt_val(sc.sigma) + ",tte,," + fmt_val(acr_tte) + "\n";
    if (svg)
      svgs.emplace_back(
          "panel_sigma_" + sigma_tokens[si] + ".svg",
          svg_curves("sigma " + sigma_tokens[si],
                     {"base ACR=" + fmt_val(acr_base), "tte ACR=" + fmt_val(acr_tte)},
                     {base_curves.back(), tte_curves.back()}));
  }
  Curve env_base = envelope(base_curves), env_tte = envelope(tte_curves);
  for (const auto& [r, v] : env_base)
    csv += "envelope,,base," + fmt_val(r) + "," + fmt_acc(v) + "\n";
  for (const auto& [r, v] : env_tte)
    csv += "envelope,,tte," + fmt_val(r) + "," + fmt_acc(v) + "\n";
  if (svg)
    svgs.emplace_back("envelope.svg",
                      svg_curves("envelope", {"base", "tte"}, {env_base, env_tte}));

  Writer wr{out_dir};
  return wr.finish("certify",
                   {{"checkpoint_fnv1a", fnv1a64_file(ckpt)},
                    {"dataset_fnv1a", fnv1a64_file(data_path)},
                    {"transforms", serialize(tte.transforms())}},
                   e.kv, csv, svgs);
}

std::vector<std::string> command_names() {
  return {"train", "attack", "ablate", "heatmap", "obfuscation", "mismatch", "certify", "synth"};
}

RunOutput run_command(const std::string& command, Config cfg, const std::string& out_dir,
                      const uint64_t* seed_override) {
  std::filesystem::create_directories(out_dir);
  if (seed_override) cfg.set("seed", std::to_string(*seed_override));
  if (command == "synth") return cmd_synth(cfg, out_dir);
  if (command == "train") return cmd_train(cfg, out_dir);
  if (command == "attack") return cmd_attack(cfg, out_dir);
  if (command == "ablate") return cmd_ablate(cfg, out_dir);
  if (command == "heatmap") return cmd_heatmap(cfg, out_dir);
  if (command == "obfuscation") return cmd_obfuscation(cfg, out_dir);
  if (command == "mismatch") return cmd_mismatch(cfg, out_dir);
  if (command == "certify") return cmd_certify(cfg, out_dir);
  throw ConfigError("unknown command '" + command + "'");
}

}  // namespace tte
