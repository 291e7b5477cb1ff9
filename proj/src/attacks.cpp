#include "tte/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "tte/errors.hpp"
#include "tte/rng.hpp"

namespace tte {

namespace {

constexpr uint64_t kGradTag = uint64_t(1) << 40;    // rng stream tags, module-unique
constexpr uint64_t kSquareTag = uint64_t(2) << 40;
constexpr double kBallSlack = 1e-10;

void validate(const AttackConfig& cfg, bool query_budget) {
  if (cfg.epsilon < 0.0 || cfg.epsilon > 1.0)
    throw ConfigError("attack: epsilon must lie in [0,1]");
  if (cfg.steps < (query_budget ? 0 : 1)) throw ConfigError("attack: steps must be >= 1");
  if (cfg.step_size < 0.0) throw ConfigError("attack: step_size must be >= 0");
  if (cfg.restarts < 1) throw ConfigError("attack: restarts must be >= 1");
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0)
    throw ConfigError("attack: momentum must lie in [0,1)");
  if (cfg.target_count < 1) throw ConfigError("attack: target_count must be >= 1");
}

double clip01(double v) { return std::min(std::max(v, 0.0), 1.0); }

double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// epsilon ball around the original pixel, then the [0,1] box
double project(double v, double orig, double eps) {
  return clip01(std::min(std::max(v, orig - eps), orig + eps));
}

Rng instance_rng(const AttackConfig& cfg, uint64_t tag, int i, int leg) {
  return Rng(cfg.seed, tag + uint64_t(cfg.base_index + i) * 1024 + uint64_t(leg));
}

void check_feasible(const Tensor& x, const Tensor& x_adv, double eps) {
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double d = x_adv[i] - x[i];
    if (!(std::fabs(d) <= eps + kBallSlack) || !(x_adv[i] >= 0.0) || !(x_adv[i] <= 1.0))
      throw NumericalError("attack: infeasible adversarial image produced");
  }
}

enum class Objective { CE, NegDLR };

struct Eval {
  std::vector<double> obj;  // per-instance value being maximized
  Tensor scores;
  Tensor grad;  // d(sum obj)/dx, empty when not requested
};

// One forward (and optional backward) on a fresh tape. CE maximizes the
// cross-entropy; NegDLR maximizes (z_t - z_y)/(z_pi1 - z_pi3), i.e. descends
// the spec's DLR. Rank indices are taken from the current scores and held
// fixed for the gradient, which is exact almost everywhere.
Eval eval_objective(const ScoreModel& m, const Tensor& x, const std::vector<int>& y,
                    const std::vector<int>& targets, Objective kind, bool want_grad) {
  ad::Tape tp;
  ad::Var xv = tp.leaf(x);
  ad::Var scores = m.forward_diff(tp, xv);
  const Tensor& s = scores.value();
  if (!s.all_finite()) throw NumericalError("attack: model produced non-finite scores");
  const int b = s.dim(0), n = s.dim(1);

  Eval out;
  out.scores = s;
  if (kind == Objective::CE) {
    out.obj = ad::cross_entropy_rows(s, y);
    if (want_grad) {
      ad::backward(tp, ad::softmax_cross_entropy(scores, y));
      out.grad = tp.grad(xv.id);  // (1/B)-scaled per-instance gradients; sign-invariant
    }
  } else {
    std::vector<int> pi1(b), pi3(b);
    for (int i = 0; i < b; ++i) {
      const double* row = s.data() + int64_t(i) * n;
      int a0 = 0, a1 = -1, a2 = -1;  // top three by score, lowest index on ties
      for (int j = 1; j < n; ++j)
        if (row[j] > row[a0]) a0 = j;
      for (int j = 0; j < n; ++j)
        if (j != a0 && (a1 < 0 || row[j] > row[a1])) a1 = j;
      for (int j = 0; j < n; ++j)
        if (j != a0 && j != a1 && (a2 < 0 || row[j] > row[a2])) a2 = j;
      pi1[i] = a0;
      pi3[i] = a2;
    }
    ad::Var num = ad::sub(ad::gather_rows(scores, targets), ad::gather_rows(scores, y));
    ad::Var den = ad::add_const(
        ad::sub(ad::gather_rows(scores, pi1), ad::gather_rows(scores, pi3)), 1e-12);
    ad::Var v = ad::div(num, den);
    out.obj.assign(v.value().data(), v.value().data() + b);
    if (want_grad) {
      ad::backward(tp, ad::sum(v));
      out.grad = tp.grad(xv.id);
    }
  }
  return out;
}

std::vector<int> apgd_checkpoints(int steps) {
  std::vector<int> w;
  double p_prev = 0.0, p = 0.22;
  while (true) {
    const int k = int(std::ceil(p * steps));
    if (k >= steps) break;
    if (w.empty() || k > w.back()) w.push_back(k);
    const double next = p + std::max(p - p_prev - 0.03, 0.06);
    p_prev = p;
    p = next;
  }
  return w;
}

void copy_row(Tensor& dst, const Tensor& src, int i, int64_t pixels) {
  std::memcpy(dst.data() + i * pixels, src.data() + i * pixels, size_t(pixels) * sizeof(double));
}

// Shared signed-gradient ascent core. FGSM, PGD and both APGD variants are
// parameterizations of this loop; the collapse tests pin that structure.
AttackOutcome ascent_core(const ScoreModel& m, const Tensor& x0, const std::vector<int>& y,
                          const AttackConfig& cfg, Objective kind,
                          const std::vector<int>& targets, double eta0, bool halving,
                          double momentum, bool random_start, int leg) {
  const int b = x0.dim(0);
  const int64_t pixels = x0.numel() / b;
  const double eps = cfg.epsilon;
  const double neg_inf = -std::numeric_limits<double>::infinity();

  Tensor xc = x0;
  if (random_start && eps > 0.0)
    for (int i = 0; i < b; ++i) {
      Rng rng = instance_rng(cfg, kGradTag, i, leg);
      for (int64_t p = 0; p < pixels; ++p) {
        const int64_t ip = i * pixels + p;
        xc[ip] = project(x0[ip] + rng.uniform(-eps, eps), x0[ip], eps);
      }
    }
  Tensor xprev = xc;
  Tensor best_x = xc;
  std::vector<double> eta(b, eta0), best_obj(b, neg_inf);
  std::vector<int> improved(b, 0);
  std::vector<double> eta_ck(b, eta0), best_ck(b, neg_inf);

  Eval ev = eval_objective(m, xc, y, targets, kind, true);
  std::vector<double> obj_prev = ev.obj;

  const std::vector<int> ckpts = halving ? apgd_checkpoints(cfg.steps) : std::vector<int>{};
  size_t next_ck = 0;
  int last_ck = 0;

  for (int k = 1; k <= cfg.steps; ++k) {
    Tensor xn(x0.shape());
    for (int i = 0; i < b; ++i)
      for (int64_t p = 0; p < pixels; ++p) {
        const int64_t ip = i * pixels + p;
        const double z = project(xc[ip] + eta[i] * sgn(ev.grad[ip]), x0[ip], eps);
        if (k == 1 || momentum == 0.0)
          xn[ip] = z;
        else
          xn[ip] = project(
              xc[ip] + (1.0 - momentum) * (z - xc[ip]) + momentum * (xc[ip] - xprev[ip]),
              x0[ip], eps);
      }
    xprev = xc;
    xc = xn;

    std::vector<double> obj_k;
    if (k < cfg.steps) {
      ev = eval_objective(m, xc, y, targets, kind, true);
      obj_k = ev.obj;
    } else {
      obj_k = eval_objective(m, xc, y, targets, kind, false).obj;
    }
    for (int i = 0; i < b; ++i) {
      if (obj_k[i] > obj_prev[i]) ++improved[i];
      if (obj_k[i] > best_obj[i]) {
        best_obj[i] = obj_k[i];
        copy_row(best_x, xc, i, pixels);
      }
    }
    obj_prev = obj_k;

    if (next_ck < ckpts.size() && k == ckpts[next_ck]) {
      const int window = k - last_ck;
      bool any_reset = false;
      for (int i = 0; i < b; ++i) {
        const bool stalled = improved[i] < 0.75 * window;
        const bool stuck = eta[i] == eta_ck[i] && best_obj[i] <= best_ck[i];
        eta_ck[i] = eta[i];  // recorded pre-halving: a fresh halving clears "stuck"
        best_ck[i] = best_obj[i];
        improved[i] = 0;
        if (stalled || stuck) {
          eta[i] /= 2.0;
          copy_row(xc, best_x, i, pixels);
          copy_row(xprev, best_x, i, pixels);
          obj_prev[i] = best_obj[i];
          any_reset = true;
        }
      }
      last_ck = k;
      ++next_ck;
      if (any_reset && k < cfg.steps) {
        ev = eval_objective(m, xc, y, targets, kind, true);
        obj_prev = ev.obj;
      }
    }
  }

  AttackOutcome out;
  out.x_adv = best_x;
  Tensor sc = m.forward(best_x);
  out.margin = margin_rows(sc, y);
  const std::vector<int> pred = argmax_rows(sc);
  out.success.resize(b);
  out.iterations.assign(b, cfg.steps);
  int correct = 0;
  for (int i = 0; i < b; ++i) {
    out.success[i] = pred[i] != y[i];
    correct += pred[i] == y[i];
  }
  out.accuracy = double(correct) / b;
  check_feasible(x0, out.x_adv, eps);
  return out;
}

// keeps, per instance, the stronger of two runs: success first, then the
// smaller margin; ties keep the incumbent so restart order is immaterial
void merge_better(AttackOutcome& a, const AttackOutcome& b, int64_t pixels) {
  int correct = 0;
  for (size_t i = 0; i < a.success.size(); ++i) {
    const bool better = (b.success[i] && !a.success[i]) ||
                        (b.success[i] == a.success[i] && b.margin[i] < a.margin[i]);
    if (better) {
      a.success[i] = b.success[i];
      a.margin[i] = b.margin[i];
      copy_row(a.x_adv, b.x_adv, int(i), pixels);
    }
    correct += !a.success[i];
  }
  a.accuracy = double(correct) / double(a.success.size());
}

void require_labels(const Tensor& x, const std::vector<int>& y, int n) {
  if (x.ndim() != 4) throw ConfigError("attack: batch must be [B,C,H,W]");
  if (int(y.size()) != x.dim(0)) throw ConfigError("attack: label count mismatch");
  for (int l : y)
    if (l < 0 || l >= n) throw ConfigError("attack: label out of range");
}

}  // namespace

std::vector<double> margin_rows(const Tensor& scores, const std::vector<int>& y) {
  const int b = scores.dim(0), n = scores.dim(1);
  std::vector<double> out(b);
  for (int i = 0; i < b; ++i) {
    const double* row = scores.data() + int64_t(i) * n;
    double other = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j)
      if (j != y[i]) other = std::max(other, row[j]);
    out[i] = row[y[i]] - other;
  }
  return out;
}

std::vector<double> dlr_targeted(const Tensor& scores, const std::vector<int>& y,
                                 const std::vector<int>& targets) {
  const int b = scores.dim(0), n = scores.dim(1);
  if (n < 4) throw ConfigError("dlr: needs at least 4 classes");
  std::vector<double> out(b);
  for (int i = 0; i < b; ++i) {
    const double* row = scores.data() + int64_t(i) * n;
    std::vector<double> sorted(row, row + n);
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    out[i] = (row[y[i]] - row[targets[i]]) / (sorted[0] - sorted[2] + 1e-12);
  }
  return out;
}

AttackOutcome fgsm(const ScoreModel& m, const Tensor& x, const std::vector<int>& y,
                   const AttackConfig& cfg) {
  AttackConfig one = cfg;
  one.steps = 1;  // single-step by definition; cfg.steps is ignored
  validate(one, false);
  require_labels(x, y, m.num_classes());
  return ascent_core(m, x, y, one, Objective::CE, {}, cfg.epsilon, false, 0.0, false, 0);
}

AttackOutcome pgd(const ScoreModel& m, const Tensor& x, const std::vector<int>& y,
                  const AttackConfig& cfg) {
  validate(cfg, false);
  require_labels(x, y, m.num_classes());
  const double step = cfg.step_size > 0.0 ? cfg.step_size : cfg.epsilon / 4.0;
  AttackOutcome out = ascent_core(m, x, y, cfg, Objective::CE, {}, step, false, 0.0,
                                  cfg.random_start, 0);
  for (int r = 1; r < cfg.restarts; ++r)
    merge_better(out, ascent_core(m, x, y, cfg, Objective::CE, {}, step, false, 0.0,
                                  cfg.random_start, r),
                 x.numel() / x.dim(0));
  check_feasible(x, out.x_adv, cfg.epsilon);
  return out;
}

AttackOutcome apgd_ce(const ScoreModel& m, const Tensor& x, const std::vector<int>& y,
                      const AttackConfig& cfg) {
  validate(cfg, false);
  require_labels(x, y, m.num_classes());
  const double eta0 = cfg.halving ? 2.0 * cfg.epsilon
                                  : (cfg.step_size > 0.0 ? cfg.step_size : cfg.epsilon / 4.0);
  AttackOutcome out = ascent_core(m, x, y, cfg, Objective::CE, {}, eta0, cfg.halving,
                                  cfg.momentum, cfg.random_start, 0);
  for (int r = 1; r < cfg.restarts; ++r)
    merge_better(out, ascent_core(m, x, y, cfg, Objective::CE, {}, eta0, cfg.halving,
                                  cfg.momentum, cfg.random_start, r),
                 x.numel() / x.dim(0));
  check_feasible(x, out.x_adv, cfg.epsilon);
  return out;
}

AttackOutcome apgd_targeted(const ScoreModel& m, const Tensor& x, const std::vector<int>& y,
                            const AttackConfig& cfg) {
  validate(cfg, false);
  const int n = m.num_classes();
  if (n < 4) throw ConfigError("apgd-t: targeted DLR needs at least 4 classes");
  require_labels(x, y, n);
  const int b = x.dim(0);
  const int64_t pixels = x.numel() / b;
  const int legs = std::min(cfg.target_count, n - 1);
  const double eta0 = cfg.halving ? 2.0 * cfg.epsilon
                                  : (cfg.step_size > 0.0 ? cfg.step_size : cfg.epsilon / 4.0);

  // targets ranked by clean logits, per instance, true class excluded
  Tensor clean = m.forward(x);
  std::vector<std::vector<int>> ranked(b);
  for (int i = 0; i < b; ++i) {
    const double* row = clean.data() + int64_t(i) * n;
    std::vector<int> idx(n);
    for (int j = 0; j < n; ++j) idx[j] = j;
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int p, int q) { return row[p] > row[q]; });
    for (int j : idx)
      if (j != y[i]) ranked[i].push_back(j);
  }

  AttackOutcome out;
  for (int t = 0; t < legs; ++t) {
    std::vector<int> targets(b);
    for (int i = 0; i < b; ++i) targets[i] = ranked[i][t];
    for (int r = 0; r < cfg.restarts; ++r) {
      const int leg = t * cfg.restarts + r;
      AttackOutcome run = ascent_core(m, x, y, cfg, Objective::NegDLR, targets, eta0,
                                      cfg.halving, cfg.momentum, cfg.random_start, leg);
      if (t == 0 && r == 0)
        out = std::move(run);
      else
        merge_better(out, run, pixels);
    }
  }
  check_feasible(x, out.x_adv, cfg.epsilon);
  return out;
}

AttackOutcome square_attack(const ScoreOracle& oracle, int num_classes, const Tensor& x,
                            const std::vector<int>& y, const AttackConfig& cfg,
                            std::vector<std::vector<double>>* accepted_margins) {
  validate(cfg, true);
  require_labels(x, y, num_classes);
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t pixels = int64_t(c) * h * w;
  const double eps = cfg.epsilon;

  AttackOutcome out;
  out.x_adv = x;
  out.iterations.assign(b, 0);
  if (accepted_margins) accepted_margins->assign(b, {});

  std::vector<Rng> rng;
  rng.reserve(b);
  for (int i = 0; i < b; ++i) rng.push_back(instance_rng(cfg, kSquareTag, i, 0));

  std::vector<double> cur_margin(b, std::numeric_limits<double>::infinity());
  std::vector<uint8_t> active(b, 0);

  if (cfg.steps > 0) {
    cur_margin = margin_rows(oracle(x), y);
    for (int i = 0; i < b; ++i) {
      ++out.iterations[i];
      active[i] = cur_margin[i] >= 0.0;  // already fooled instances stay at x_adv = x
    }

    const int s0 = std::max(1, int(std::lround(0.4 * std::min(h, w))));
    for (int k = 1; k < cfg.steps; ++k) {
      // side shrinks geometrically over five equal budget phases
      const int phase = std::min(4, int(5.0 * k / cfg.steps));
      const int side = std::max(1, s0 >> phase);

      std::vector<int> idx;
      for (int i = 0; i < b; ++i)
        if (active[i]) idx.push_back(i);
      if (idx.empty()) break;

      const int nb = int(idx.size());
      Tensor cand({nb, c, h, w});
      for (int j = 0; j < nb; ++j) {
        const int i = idx[j];
        std::memcpy(cand.data() + j * pixels, out.x_adv.data() + i * pixels,
                    size_t(pixels) * sizeof(double));
        const int py = int(rng[i].below(uint64_t(h - side + 1)));
        const int px = int(rng[i].below(uint64_t(w - side + 1)));
        for (int ch = 0; ch < c; ++ch) {
          const double delta = rng[i].next_unit() < 0.5 ? -eps : eps;
          for (int yy = py; yy < py + side; ++yy)
            for (int xx = px; xx < px + side; ++xx) {
              const int64_t p = (int64_t(ch) * h + yy) * w + xx;
              cand[j * pixels + p] = clip01(x[i * pixels + p] + delta);
            }
        }
      }

      const std::vector<int> ysub = [&] {
        std::vector<int> v(nb);
        for (int j = 0; j < nb; ++j) v[j] = y[idx[j]];
        return v;
      }();
      const std::vector<double> m_new = margin_rows(oracle(cand), ysub);
      for (int j = 0; j < nb; ++j) {
        const int i = idx[j];
        ++out.iterations[i];
        if (m_new[j] < cur_margin[i]) {
          cur_margin[i] = m_new[j];
          std::memcpy(out.x_adv.data() + i * pixels, cand.data() + j * pixels,
                      size_t(pixels) * sizeof(double));
          if (accepted_margins) (*accepted_margins)[i].push_back(m_new[j]);
        }
        if (cur_margin[i] < 0.0) active[i] = 0;  // success: freeze the instance
      }
    }
  }

  Tensor sc = oracle(out.x_adv);
  out.margin = margin_rows(sc, y);
  const std::vector<int> pred = argmax_rows(sc);
  out.success.resize(b);
  int correct = 0;
  for (int i = 0; i < b; ++i) {
    out.success[i] = pred[i] != y[i];
    correct += pred[i] == y[i];
  }
  out.accuracy = double(correct) / b;
  check_feasible(x, out.x_adv, eps);
  return out;
}

std::string attack_name(AttackKind k) {
  switch (k) {
    case AttackKind::FGSM: return "fgsm";
    case AttackKind::PGD: return "pgd";
    case AttackKind::APGD_CE: return "apgd-ce";
    case AttackKind::APGD_T: return "apgd-t";
    case AttackKind::Square: return "square";
  }
  throw ConfigError("attack_name: unknown kind");
}

std::vector<uint8_t> aggregate_robust(const std::vector<uint8_t>& clean_correct,
                                      const std::vector<std::vector<uint8_t>>& attack_success) {
  std::vector<uint8_t> robust = clean_correct;
  for (const auto& mask : attack_success) {
    if (mask.size() != clean_correct.size())
      throw ConfigError("aggregate_robust: mask size mismatch");
    for (size_t i = 0; i < robust.size(); ++i)
      if (mask[i]) robust[i] = 0;
  }
  return robust;
}

namespace {

AttackOutcome dispatch(const ScoreModel& m, AttackKind kind, const Tensor& x,
                       const std::vector<int>& y, const AttackConfig& cfg) {
  switch (kind) {
    case AttackKind::FGSM: return fgsm(m, x, y, cfg);
    case AttackKind::PGD: return pgd(m, x, y, cfg);
    case AttackKind::APGD_CE: return apgd_ce(m, x, y, cfg);
    case AttackKind::APGD_T: return apgd_targeted(m, x, y, cfg);
    case AttackKind::Square:
      return square_attack([&](const Tensor& q) { return m.forward(q); }, m.num_classes(), x,
                           y, cfg);
  }
  throw ConfigError("attack: unknown kind");
}

}  // namespace

RobustReport robust_accuracy(const ScoreModel& m, const Dataset& ds,
                             const std::vector<SuiteAttack>& suite, int chunk) {
  if (suite.empty()) throw ConfigError("robust_accuracy: empty attack suite");
  if (chunk < 1) throw ConfigError("robust_accuracy: chunk must be >= 1");
  const int total = ds.b();
  const std::vector<int> y = labels_int(ds);
  const int64_t plane = int64_t(ds.c()) * ds.h() * ds.w();

  RobustReport rep;
  rep.clean_correct.assign(total, 0);
  rep.attack_success.assign(suite.size(), std::vector<uint8_t>(total, 0));

  for (int start = 0; start < total; start += chunk) {
    const int nb = std::min(chunk, total - start);
    Tensor xs({nb, ds.c(), ds.h(), ds.w()});
    std::memcpy(xs.data(), ds.images.data() + start * plane, size_t(nb) * plane * sizeof(double));
    std::vector<int> ys(y.begin() + start, y.begin() + start + nb);

    const std::vector<int> pred = predict(m, xs);
    for (int i = 0; i < nb; ++i) rep.clean_correct[start + i] = pred[i] == ys[i];

    for (size_t a = 0; a < suite.size(); ++a) {
      AttackConfig cfg = suite[a].cfg;
      cfg.base_index = start;
      const AttackOutcome o = dispatch(m, suite[a].kind, xs, ys, cfg);
      for (int i = 0; i < nb; ++i) rep.attack_success[a][start + i] = o.success[i];
    }
  }

  int clean = 0;
  for (uint8_t v : rep.clean_correct) clean += v;
  rep.clean_accuracy = double(clean) / total;
  for (size_t a = 0; a < suite.size(); ++a) {
    int ok = 0;
    for (uint8_t s : rep.attack_success[a]) ok += !s;
    rep.per_attack.emplace_back(attack_name(suite[a].kind), double(ok) / total);
  }
  rep.robust_mask = aggregate_robust(rep.clean_correct, rep.attack_success);
  int rob = 0;
  for (uint8_t v : rep.robust_mask) rob += v;
  rep.robust_accuracy = double(rob) / total;
  return rep;
}

ObfuscationSweep obfuscation_sweep(const ScoreModel& m, const Dataset& ds,
                                   const std::vector<int>& iter_grid,
                                   const std::vector<double>& eps_grid, double fixed_eps,
                                   int fixed_steps, const AttackConfig& base, int chunk) {
  if (iter_grid.empty() || eps_grid.empty())
    throw ConfigError("obfuscation_sweep: grids must be non-empty");
  ObfuscationSweep sweep;
  auto run = [&](double eps, int steps) {
    AttackConfig cfg = base;
    cfg.epsilon = eps;
    cfg.steps = steps;
    RobustReport rep = robust_accuracy(m, ds, {{AttackKind::APGD_CE, cfg}}, chunk);
    return rep.per_attack[0].second;
  };
  for (int it : iter_grid) sweep.by_iterations.emplace_back(it, run(fixed_eps, it));
  for (double e : eps_grid) sweep.by_epsilon.emplace_back(e, run(e, fixed_steps));
  return sweep;
}

}  // namespace tte
