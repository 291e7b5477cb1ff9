#include "tte/smoothing.hpp"

#include <algorithm>
#include <cstring>

#include "tte/errors.hpp"
#include "tte/rng.hpp"
#include "tte/stats.hpp"

namespace tte {

namespace {

constexpr uint64_t kSmoothTag = 3ull << 40;

uint64_t selection_stream(int input_index) {
  return kSmoothTag + 2ull * static_cast<uint64_t>(input_index);
}
uint64_t estimation_stream(int input_index) { return selection_stream(input_index) + 1; }

void validate(const SmoothingConfig& cfg) {
  if (!(cfg.sigma > 0.0)) throw ConfigError("smoothing: sigma must be > 0");
  if (cfg.n0 < 1 || cfg.n < 1) throw ConfigError("smoothing: n0 and n must be >= 1");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw ConfigError("smoothing: alpha must be in (0,1)");
  if (cfg.batch < 1) throw ConfigError("smoothing: batch must be >= 1");
}

// noise per sample is drawn in full before the next sample starts, so the
// tally never depends on the batch size
std::vector<int> counts_from(const ScoreModel& m, const Tensor& x, double sigma, int n,
                             Rng& rng, int batch) {
  if (x.ndim() != 4 || x.dim(0) != 1) throw ConfigError("noisy_counts: x must be [1,C,H,W]");
  const size_t px = x.numel();
  std::vector<int> counts(m.num_classes(), 0);
  int done = 0;
  while (done < n) {
    const int nb = std::min(batch, n - done);
    Tensor xb({nb, x.dim(1), x.dim(2), x.dim(3)});
    for (int s = 0; s < nb; ++s) {
      double* row = xb.data() + s * px;
      const double* base = x.data();
      for (size_t i = 0; i < px; ++i) row[i] = base[i] + sigma * rng.normal();
    }
    for (int p : predict(m, xb)) ++counts[p];
    done += nb;
  }
  return counts;
}

int argmax_count(const std::vector<int>& counts) {
  return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

}  // namespace

std::vector<int> noisy_counts(const ScoreModel& m, const Tensor& x, double sigma, int n,
                              uint64_t seed, int batch) {
  if (!(sigma > 0.0)) throw ConfigError("noisy_counts: sigma must be > 0");
  if (n < 1) throw ConfigError("noisy_counts: n must be >= 1");
  Rng rng(seed);
  return counts_from(m, x, sigma, n, rng, batch);
}

CertificationResult certify(const ScoreModel& m, const Tensor& x, int label,
                            const SmoothingConfig& cfg, int input_index) {
  validate(cfg);
  Rng sel_rng(cfg.seed, selection_stream(input_index));
  Rng est_rng(cfg.seed, estimation_stream(input_index));
  const int guess = argmax_count(counts_from(m, x, cfg.sigma, cfg.n0, sel_rng, cfg.batch));
  const std::vector<int> counts = counts_from(m, x, cfg.sigma, cfg.n, est_rng, cfg.batch);
  CertificationResult r;
  r.pa_lower = clopper_pearson_lower(counts[guess], cfg.n, cfg.alpha);
  if (r.pa_lower <= 0.5) return r;  // abstain: predicted -1, radius 0
  r.predicted = guess;
  r.radius = cfg.sigma * inv_normal_cdf(r.pa_lower);
  r.correct = (guess == label);
  return r;
}

std::vector<CertificationResult> certify_set(const ScoreModel& m, const Dataset& ds,
                                             const SmoothingConfig& cfg) {
  const std::vector<int> labels = labels_int(ds);
  std::vector<CertificationResult> out;
  out.reserve(ds.b());
  for (int i = 0; i < ds.b(); ++i) out.push_back(certify(m, ds.image(i), labels[i], cfg, i));
  return out;
}

double acr(const std::vector<CertificationResult>& results) {
  if (results.empty()) throw ConfigError("acr: empty result list");
  double s = 0.0;
  for (const auto& r : results) s += r.correct ? r.radius : 0.0;
  return s / results.size();
}

Curve certified_curve(const std::vector<CertificationResult>& results,
                      const std::vector<double>& radius_grid) {
  if (results.empty()) throw ConfigError("certified_curve: empty result list");
  if (radius_grid.empty()) throw ConfigError("certified_curve: empty radius grid");
  if (!std::is_sorted(radius_grid.begin(), radius_grid.end()))
    throw ConfigError("certified_curve: radius grid must be sorted ascending");
  Curve curve;
  curve.reserve(radius_grid.size());
  for (double r : radius_grid) {
    int hits = 0;
    for (const auto& res : results) hits += (res.correct && res.radius >= r) ? 1 : 0;
    curve.emplace_back(r, static_cast<double>(hits) / results.size());
  }
  return curve;
}

Curve envelope(const std::vector<Curve>& curves) {
  if (curves.empty()) throw ConfigError("envelope: need at least one curve");
  Curve out = curves[0];
  for (size_t c = 1; c < curves.size(); ++c) {
    if (curves[c].size() != out.size()) throw ConfigError("envelope: curve grids differ");
    for (size_t i = 0; i < out.size(); ++i) {
      if (curves[c][i].first != out[i].first) throw ConfigError("envelope: curve grids differ");
      out[i].second = std::max(out[i].second, curves[c][i].second);
    }
  }
  return out;
}

}  // namespace tte
