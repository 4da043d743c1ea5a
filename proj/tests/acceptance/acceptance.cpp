// Acceptance harness: one PASS/FAIL line per criterion, non-zero exit on any
// failure. The benchmark checks share one generated corpus.

#include "../support/oracles.hpp"

#include "wlforge/parallel.hpp"
#include "wlforge/pipeline.hpp"
#include "wlforge/quality.hpp"
#include "wlforge/raster_io.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>

using namespace wlforge;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

void check(const char* name, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (s > budget_s) {
    o.pass = false;
    o.detail += " [over time budget " + std::to_string(static_cast<int>(budget_s)) + " s]";
  }
  if (!o.pass) ++g_failures;
  std::printf("%s  %-28s %7.2f s  %s\n", o.pass ? "PASS" : "FAIL", name, s, o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

/// Seed-mean DICE of rows matching pred.
double mean_dice(const std::vector<EvalRow>& rows, const std::function<bool(const EvalRow&)>& pred, int* n = nullptr) {
  double sum = 0;
  int k = 0;
  for (const auto& r : rows)
    if (pred(r)) {
      sum += r.mean_dice;
      ++k;
    }
  if (n) *n = k;
  if (k == 0) throw std::runtime_error("no rows matched");
  return sum / k;
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

class ZeroCoarse final : public CoarseSegmenter {
 public:
  ProbMask predict(const GrayImage& img) const override { return ProbMask(img.width(), img.height(), 0.0); }
};

Outcome components() {
  Rng rng(2024);
  int checked = 0;
  for (int i = 0; i < 500; ++i) {
    const double density = 0.1 + 0.8 * i / 499.0;
    const BinMask m = oracle::random_mask(rng, 32, 32, density);
    for (const auto conn : {Connectivity::Four, Connectivity::Eight}) {
      std::set<std::set<std::pair<int, int>>> got;
      for (const auto& c : label_components(m, conn)) {
        std::set<std::pair<int, int>> px;
        for (const auto& p : c.pixels()) px.insert({p.row, p.col});
        got.insert(px);
      }
      if (got != oracle::flood_partition(m, conn))
        return {false, "partition differs on mask " + std::to_string(i)};
      ++checked;
    }
  }
  return {true, std::to_string(checked) + " labelings match flood fill"};
}

Outcome innermost() {
  Rng rng(77);
  for (int i = 0; i < 200; ++i) {
    const int h = 8 + static_cast<int>(rng.below(25)), w = 8 + static_cast<int>(rng.below(25));
    BinMask m = oracle::random_mask(rng, h, w, 0.4 + 0.5 * rng.uniform());
    m(h / 2, w / 2) = true;
    const auto comps = label_components(m);
    const Component& c = comps.front();
    std::set<std::pair<int, int>> members;
    for (const auto& p : c.pixels()) members.insert({p.row, p.col});
    int best = 0;
    for (const auto& [r, col] : members) best = std::max(best, oracle::brute_distance(members, h, w, r, col));
    const Pixel p = innermost_point(c, m.dims());
    if (!members.count({p.row, p.col})) return {false, "point outside the component on mask " + std::to_string(i)};
    if (oracle::brute_distance(members, h, w, p.row, p.col) != best)
      return {false, "distance below the maximum on mask " + std::to_string(i)};
  }
  return {true, "200 masks"};
}

Outcome metrics() {
  Rng rng(31);
  double worst = 0;
  for (int i = 0; i < 200; ++i) {
    const int h = 1 + static_cast<int>(rng.below(40)), w = 1 + static_cast<int>(rng.below(40));
    const BinMask a = oracle::random_mask(rng, h, w, rng.uniform());
    const BinMask b = oracle::random_mask(rng, h, w, rng.uniform());
    worst = std::max({worst, std::abs(dice(a, b) - oracle::dice(a, b)), std::abs(iou(a, b) - oracle::iou(a, b)),
                      std::abs(pixel_accuracy(a, b) - oracle::accuracy(a, b))});
    if (dice(a, b) != dice(b, a)) return {false, "dice asymmetric on pair " + std::to_string(i)};
    if (dice(a, b) < iou(a, b)) return {false, "dice < iou on pair " + std::to_string(i)};
  }
  return {worst <= 1e-12, fmt("max abs error %.3g", worst)};
}

Outcome filter_rule() {
  const BinMask over = oracle::with_count(256, 256, 63700);
  const BinMask under = oracle::with_count(256, 256, 63570);
  const FilterVerdict a = accept_weak_label(over), b = accept_weak_label(under);
  if (a.accepted || a.reason != FilterReason::OverForeground) return {false, "63700 not rejected as over_foreground"};
  if (!b.accepted) return {false, "63570 not accepted"};
  BinMask not_over = over, not_under = under;
  not_over.bits() = !over.bits();
  not_under.bits() = !under.bits();
  const FilterVerdict ca = accept_weak_label(not_over), cb = accept_weak_label(not_under);
  if (ca.accepted || ca.reason != FilterReason::OverBackground || !cb.accepted) return {false, "complement asymmetric"};
  Rng rng(8);
  for (int i = 0; i < 300; ++i) {
    const int n = 1 + static_cast<int>(rng.below(40));
    BinMask m = oracle::with_count(n, n, static_cast<long long>(rng.below(n * n + 1)));
    BinMask c = m;
    c.bits() = !m.bits();
    if (accept_weak_label(m).accepted != accept_weak_label(c).accepted) return {false, "complement asymmetric"};
  }
  return {true, "63700 rejected, 63570 accepted, complements agree"};
}

}  // namespace

int main() {
  const unsigned jobs = default_jobs();
  std::printf("acceptance: %u worker(s)\n", jobs);

  check("components = flood fill", 5, components);
  check("innermost point", 5, innermost);
  check("metrics", 5, metrics);
  check("filter rule", 5, filter_rule);

  testutil::TempDir work("acceptance");
  const fs::path data = work.path() / "data";
  generate_dataset(benchmark_synth_config(), 130, 30, data, jobs);
  PipelineConfig base = benchmark_pipeline_config();
  base.dataset = data / kDatasetManifestName;
  base.n_gold = 5;
  base.n_weak_targets = {0, 25, 50, 100};
  const RunOptions opts{jobs, {}};

  check("weak-label gain", 120, [&]() -> Outcome {
    PipelineConfig cfg = base;
    cfg.out_dir = work.path() / "t1";
    cfg.eval_prompt_modes = {EvalPromptMode::AutoNone, EvalPromptMode::Box, EvalPromptMode::Points};
    const auto rows = run_pipeline(cfg, opts).rows;
    const double d0 = mean_dice(rows, [](const EvalRow& r) { return r.prompt_mode == EvalPromptMode::AutoNone; });
    bool ok = true;
    std::string detail = fmt("baseline %.4f", d0);
    for (const auto mode : {EvalPromptMode::Box, EvalPromptMode::Points}) {
      const double d50 = mean_dice(rows, [&](const EvalRow& r) { return r.prompt_mode == mode && r.n_weak_target == 50; });
      const double d100 = mean_dice(rows, [&](const EvalRow& r) { return r.prompt_mode == mode && r.n_weak_target == 100; });
      ok &= d100 >= d0 + 0.02 && d50 >= d0;
      detail += "; " + to_string(mode) + fmt(" 50:%.4f", d50) + fmt(" 100:%.4f", d100);
    }
    return {ok, detail};
  });

  check("gold-count sweep", 240, [&]() -> Outcome {
    PipelineConfig cfg = base;
    cfg.out_dir = work.path() / "t3";
    cfg.seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    cfg.eval_prompt_modes = {EvalPromptMode::Points};
    const auto rows = run_gold_sweep(cfg, {3, 5, 10, 20}, 50, opts).rows;
    bool ok = true;
    double prev = -1;
    std::string detail;
    for (const std::size_t g : {3, 5, 10, 20}) {
      const double gs = mean_dice(rows, [&](const EvalRow& r) { return r.n_gold == g && r.n_weak_target == 0; });
      const double wl = mean_dice(rows, [&](const EvalRow& r) { return r.n_gold == g && r.n_weak_target == 50; });
      ok &= wl >= gs - 0.01 && gs >= prev;
      prev = gs;
      detail += (detail.empty() ? "" : "; ") + std::to_string(g) + fmt(": GS %.4f", gs) + fmt(" GS+WL %.4f", wl);
    }
    return {ok, detail};
  });

  check("fidelity ordering", 180, [&]() -> Outcome {
    PipelineConfig cfg = base;
    cfg.out_dir = work.path() / "t4";
    cfg.eval_prompt_modes = {EvalPromptMode::Points};
    const auto rows = run_fidelity_sweep(cfg, {medsam_like(), sam_like()}, opts).rows;
    const std::size_t top = cfg.n_weak_targets.back();
    const double med = mean_dice(rows, [&](const EvalRow& r) { return r.backend == "mock_oracle:medsam-like" && r.n_weak_target == top; });
    const double sam = mean_dice(rows, [&](const EvalRow& r) { return r.backend == "mock_oracle:sam-like" && r.n_weak_target == top; });
    const double d0 = mean_dice(rows, [&](const EvalRow& r) { return r.backend == "mock_oracle:medsam-like" && r.n_weak_target == 0; });
    return {med > sam && sam > d0, fmt("medsam-like %.4f", med) + fmt(" > sam-like %.4f", sam) + fmt(" > baseline %.4f", d0)};
  });

  check("prompt strategies", 180, [&]() -> Outcome {
    PipelineConfig cfg = base;
    cfg.out_dir = work.path() / "strategies";
    const auto rows = run_strategy_comparison(cfg, opts).rows;
    const std::size_t top = cfg.n_weak_targets.back();
    std::map<std::string, double> d;
    for (const char* s : {"coarse", "darkest", "full_box"})
      d[s] = mean_dice(rows, [&](const EvalRow& r) { return r.strategy == s && r.n_weak_target == top; });
    return {d["coarse"] >= d["darkest"] && d["coarse"] >= d["full_box"],
            fmt("coarse %.4f", d["coarse"]) + fmt(", darkest %.4f", d["darkest"]) + fmt(", full_box %.4f", d["full_box"])};
  });

  check("empty coarse", 120, [&]() -> Outcome {
    PipelineConfig cfg = base;
    cfg.out_dir = work.path() / "empty";
    cfg.seeds = {0};
    RunOptions o = opts;
    o.hooks.coarse_factory = [](const PixelClassifier&) { return std::make_unique<ZeroCoarse>(); };
    const PipelineResult res = run_pipeline(cfg, o);
    const std::size_t pool = 130 - cfg.n_gold;
    const std::size_t prompted = cfg.eval_prompt_modes.size() - 1;
    bool has_baseline = false, any_weak = false;
    for (const auto& r : res.rows) {
      has_baseline |= r.prompt_mode == EvalPromptMode::AutoNone && r.n_weak == 0;
      any_weak |= r.n_weak > 0;
    }
    const auto& k = res.record.counts;
    const bool ok = !any_weak && has_baseline && k.accepted == 0 && k.coarse_empty == pool * prompted && k.reconciles();
    return {ok, "coarse_empty " + std::to_string(k.coarse_empty) + " of " + std::to_string(pool * prompted) +
                    " attempts (pool " + std::to_string(pool) + " x " + std::to_string(prompted) + " modes), baseline row " +
                    (has_baseline ? "present" : "missing")};
  });

  check("determinism across --jobs", 240, [&]() -> Outcome {
    PipelineConfig a = base, b = base;
    a.seeds = b.seeds = {0, 1};
    a.out_dir = work.path() / "det_j1";
    b.out_dir = work.path() / "det_j4";
    emit_report(run_pipeline(a, RunOptions{1, {}}).rows, {}, a.out_dir);
    emit_report(run_pipeline(b, RunOptions{4, {}}).rows, {}, b.out_dir);
    if (read_file(a.out_dir / "rows.csv") != read_file(b.out_dir / "rows.csv")) return {false, "rows.csv differs"};
    std::size_t pngs = 0;
    for (const char* seed : {"seed_0", "seed_1"})
      for (const char* mode : {"box", "points"}) {
        const fs::path sub = fs::path(seed) / mode / "weak_labels";
        const auto sa = testutil::snapshot(a.out_dir / sub), sb = testutil::snapshot(b.out_dir / sub);
        if (sa != sb) return {false, sub.string() + " differs"};
        pngs += sa.size();
      }
    return {pngs > 0, "rows.csv and " + std::to_string(pngs) + " weak PNGs identical (jobs 1 vs 4)"};
  });

  check("hidden-gt firewall", 120, [&]() -> Outcome {
    PipelineConfig cfg = base;
    cfg.out_dir = work.path() / "firewall";
    cfg.seeds = {0};
    std::mutex mu;
    std::string current;
    std::map<std::string, int> hidden;
    int training_reads = 0;
    RunOptions o = opts;
    o.hooks.on_stage = [&](const std::string& s) {
      std::lock_guard lock(mu);
      current = s;
    };
    ScopedReadObserver watch([&](const fs::path& p) {
      std::lock_guard lock(mu);
      if (is_training_stage(current)) ++training_reads;
      for (const auto& part : p)
        if (part == kHiddenGtDir) ++hidden[current];
    });
    run_pipeline(cfg, o);
    const int bad = hidden[stage::kFitGold] + hidden[stage::kRefit];
    return {bad == 0 && training_reads > 0 && hidden[stage::kWeakLabel] > 0,
            std::to_string(bad) + " hidden_gt reads in " + std::to_string(training_reads) + " training-stage reads; " +
                std::to_string(hidden[stage::kWeakLabel]) + " by the oracle"};
  });

  std::printf("%s: %d failure(s)\n", g_failures ? "FAILED" : "ALL PASSED", g_failures);
  return g_failures ? 1 : 0;
}
