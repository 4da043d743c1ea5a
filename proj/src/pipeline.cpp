#include "wlforge/pipeline.hpp"

#include "wlforge/config.hpp"
#include "wlforge/parallel.hpp"
#include "wlforge/random.hpp"
#include "wlforge/raster_io.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace wlforge {

namespace fs = std::filesystem;

void PipelineConfig::validate() const {
  if (n_gold < 1) throw std::invalid_argument("n_gold must be at least 1");
  if (!std::is_sorted(n_weak_targets.begin(), n_weak_targets.end()))
    throw std::invalid_argument("n_weak_targets must be sorted ascending");
  if (seeds.empty()) throw std::invalid_argument("seeds must not be empty");
  if (eval_prompt_modes.empty()) throw std::invalid_argument("eval_prompt_modes must not be empty");
  if (!(tau_filter > 0.5 && tau_filter < 1.0)) throw std::invalid_argument("tau_filter must lie in (0.5, 1)");
  if (trainer.epochs < 1 || !(trainer.learn_rate > 0.0)) throw std::invalid_argument("trainer needs epochs >= 1 and learn_rate > 0");
  prompt_spec.validate();
  backend.validate();
}

PipelineConfig benchmark_pipeline_config() {
  PipelineConfig cfg;
  cfg.seeds = {0, 1, 2, 3, 4};
  cfg.trainer.samples_per_class = 4;
  return cfg;
}

FilterCounts& FilterCounts::operator+=(const FilterCounts& o) {
  attempted += o.attempted;
  coarse_empty += o.coarse_empty;
  filtered_over_fg += o.filtered_over_fg;
  filtered_over_bg += o.filtered_over_bg;
  accepted += o.accepted;
  return *this;
}

void RunRecord::merge(const RunRecord& other) {
  for (const auto& [k, v] : other.stage_seconds) stage_seconds[k] += v;
  counts += other.counts;
  if (config_hash.empty()) config_hash = other.config_hash;
  warnings.insert(warnings.end(), other.warnings.begin(), other.warnings.end());
}

bool is_training_stage(const std::string& name) { return name == stage::kFitGold || name == stage::kRefit; }

std::vector<LabeledImage> load_labeled(const DatasetManifest& manifest) {
  std::vector<LabeledImage> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    if (!e.mask_path) throw ManifestError("entry '" + e.id + "' has no mask");
    out.push_back({load_image(manifest.resolve(e.image_path)), load_mask(manifest.resolve(*e.mask_path))});
  }
  return out;
}

std::uint64_t fit_seed(std::uint64_t seed) { return derive_seed(seed, "fit"); }

BinMask segment_prediction(const PixelClassifier& model, const GrayImage& img, double tau) {
  return binarize(predict_coarse(model, img), tau);
}

Evaluation evaluate_model(const PixelClassifier& model, std::span<const LabeledImage> test, double tau) {
  std::vector<BinMask> preds;
  std::vector<BinMask> gts;
  preds.reserve(test.size());
  gts.reserve(test.size());
  for (const auto& t : test) {
    preds.push_back(segment_prediction(model, t.image, tau));
    gts.push_back(t.mask);
  }
  return evaluate(preds, gts);
}

Evaluation evaluate_model(const PixelClassifier& model, const DatasetManifest& test, double tau) {
  const auto loaded = load_labeled(test);
  return evaluate_model(model, std::span<const LabeledImage>(loaded), tau);
}

DatasetManifest with_absolute_root(const DatasetManifest& manifest) {
  DatasetManifest out = manifest;
  const fs::path r = manifest.root.is_absolute() ? manifest.root : manifest.base_dir / manifest.root;
  out.root = fs::absolute(r).lexically_normal();
  out.base_dir.clear();
  return out;
}

BackendConfig seeded_backend(const BackendConfig& backend, std::uint64_t run_seed) {
  BackendConfig out = backend;
  out.fidelity.seed = derive_seed(backend.fidelity.seed, run_seed);
  if (out.external.oracle_hints) out.external.oracle_hints->seed = derive_seed(backend.external.oracle_hints->seed, run_seed);
  return out;
}

Provenance make_provenance(const PromptSpec& spec, const BackendConfig& backend, const std::string& config_hash,
                           FilterReason reason) {
  Provenance p;
  p.strategy = to_string(spec.strategy);
  p.prompt_mode = to_string(spec.mode);
  p.backend = backend.name();
  p.fidelity_preset = backend.kind == BackendKind::MockOracle ? backend.preset : "external";
  p.config_hash = config_hash;
  p.filter_reason = to_string(reason);
  return p;
}

ManifestEntry candidate_entry(const ManifestEntry& pool_entry, const fs::path& mask_path, Provenance provenance) {
  ManifestEntry e;
  e.id = pool_entry.id;
  e.image_path = pool_entry.image_path;
  if (provenance.filter_reason == to_string(FilterReason::EmptyCoarse)) {
    e.label_kind = LabelKind::Unlabeled;
  } else {
    e.label_kind = LabelKind::Weak;
    e.mask_path = fs::absolute(mask_path).lexically_normal();
  }
  e.provenance = std::move(provenance);
  return e;
}

WeakLabelBatch label_pool(const DatasetManifest& pool, std::span<const ProbMask> coarse, const HiddenGroundTruth& hidden,
                          const PromptSpec& spec, const BackendConfig& backend, double tau_filter, const fs::path& weak_dir,
                          const std::string& config_hash, unsigned jobs) {
  if (coarse.size() != pool.entries.size()) throw std::invalid_argument("one coarse mask per pool entry is required");
  fs::create_directories(weak_dir);
  const std::size_t n = pool.entries.size();
  std::vector<FilterReason> reasons(n, FilterReason::Ok);
  jobs = std::max(1u, jobs);
  // One backend instance per worker; external ones spawn lazily.
  std::vector<std::unique_ptr<PromptableSegmenter>> segmenters(jobs);
  parallel_for(n, jobs, [&](std::size_t i, unsigned worker) {
    const ManifestEntry& e = pool.entries[i];
    const GrayImage img = load_image(pool.resolve(e.image_path));
    const auto prompts = build_prompts(coarse[i], img, spec);
    if (!prompts) {
      reasons[i] = FilterReason::EmptyCoarse;
      return;
    }
    if (!segmenters[worker]) segmenters[worker] = make_segmenter(backend);
    const auto gt = hidden.handle(e.id);
    const BinMask weak = segmenters[worker]->segment(img, *prompts, gt ? &*gt : nullptr);
    save_mask(weak, weak_dir / (e.id + ".png"));
    reasons[i] = accept_weak_label(weak, tau_filter).reason;
  });

  WeakLabelBatch batch;
  batch.candidates.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const ManifestEntry& e = pool.entries[i];
    batch.candidates.push_back(candidate_entry(e, weak_dir / (e.id + ".png"), make_provenance(spec, backend, config_hash, reasons[i])));
    ++batch.counts.attempted;
    switch (reasons[i]) {
      case FilterReason::Ok: ++batch.counts.accepted; break;
      case FilterReason::EmptyCoarse: ++batch.counts.coarse_empty; break;
      case FilterReason::OverForeground: ++batch.counts.filtered_over_fg; break;
      case FilterReason::OverBackground: ++batch.counts.filtered_over_bg; break;
    }
  }
  return batch;
}

std::vector<ManifestEntry> take_accepted(const std::vector<ManifestEntry>& candidates, std::size_t n) {
  std::vector<ManifestEntry> out;
  for (const auto& c : candidates) {
    if (out.size() == n) break;
    if (c.label_kind == LabelKind::Weak && c.provenance && c.provenance->filter_reason == "ok") out.push_back(c);
  }
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

class StageTimer {
 public:
  StageTimer(RunRecord& record, const PipelineHooks& hooks, const char* name)
      : record_(record), name_(name), start_(Clock::now()) {
    if (hooks.on_stage) hooks.on_stage(name_);
  }
  ~StageTimer() { record_.stage_seconds[name_] += std::chrono::duration<double>(Clock::now() - start_).count(); }
  StageTimer(const StageTimer&) = delete;
  StageTimer& operator=(const StageTimer&) = delete;

 private:
  RunRecord& record_;
  std::string name_;
  Clock::time_point start_;
};

EvalRow make_row(const PipelineConfig& cfg, const std::string& dataset, std::uint64_t seed, EvalPromptMode mode,
                 std::size_t n_weak, std::size_t target, const Evaluation& ev, std::size_t n_test) {
  EvalRow r;
  r.dataset = dataset;
  r.n_gold = cfg.n_gold;
  r.n_weak = n_weak;
  r.n_weak_target = target;
  r.prompt_mode = mode;
  r.strategy = to_string(cfg.prompt_spec.strategy);
  r.backend = cfg.backend.name();
  r.mean_dice = ev.mean_dice;
  r.mean_iou = ev.mean_iou;
  r.n_test = n_test;
  r.seed = seed;
  return r;
}

template <typename F>
auto in_stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError(name, e.what());
  }
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg, const RunOptions& options) {
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw PipelineError("config", e.what());
  }
  const unsigned jobs = std::max(1u, options.jobs);
  const auto& hooks = options.hooks;
  PipelineResult result;
  RunRecord& record = result.record;
  record.config_hash = config_hash(cfg);
  record.warm_start = false;

  const DatasetManifest dataset = in_stage(stage::kSelectGold, [&] { return load_manifest(cfg.dataset); });

  for (const std::uint64_t seed : cfg.seeds) {
    const fs::path seed_dir = cfg.out_dir / ("seed_" + std::to_string(seed));
    GoldSplit split;
    {
      StageTimer t(record, hooks, stage::kSelectGold);
      split = in_stage(stage::kSelectGold, [&] { return select_gold(dataset, cfg.n_gold, seed); });
      in_stage(stage::kSelectGold, [&] {
        save_manifest(with_absolute_root(split.gold), seed_dir / "manifests" / "gold.manifest");
        save_manifest(with_absolute_root(split.rest), seed_dir / "manifests" / "unlabeled.manifest");
        save_manifest(with_absolute_root(split.test), seed_dir / "manifests" / "test.manifest");
        return 0;
      });
    }

    PixelClassifier baseline;
    {
      StageTimer t(record, hooks, stage::kFitGold);
      baseline = in_stage(stage::kFitGold, [&] {
        const auto gold = load_labeled(split.gold);
        return fit_classifier(gold, cfg.trainer, fit_seed(seed));
      });
    }

    std::vector<LabeledImage> test;
    Evaluation base_eval;
    {
      StageTimer t(record, hooks, stage::kBaselineEval);
      test = in_stage(stage::kBaselineEval, [&] { return load_labeled(split.test); });
      base_eval = evaluate_model(baseline, std::span<const LabeledImage>(test), cfg.prompt_spec.binarize_tau);
    }
    const std::string dataset_name = dataset.name;
    bool wants_auto = false;
    for (auto m : cfg.eval_prompt_modes) wants_auto |= m == EvalPromptMode::AutoNone;
    if (wants_auto)
      result.rows.push_back(make_row(cfg, dataset_name, seed, EvalPromptMode::AutoNone, 0, 0, base_eval, test.size()));

    bool needs_pool = false;
    for (auto m : cfg.eval_prompt_modes) needs_pool |= m != EvalPromptMode::AutoNone;
    if (!needs_pool) continue;

    std::vector<ProbMask> coarse;
    {
      StageTimer t(record, hooks, stage::kPredictCoarse);
      coarse = in_stage(stage::kPredictCoarse, [&] {
        std::unique_ptr<CoarseSegmenter> seg =
            hooks.coarse_factory ? hooks.coarse_factory(baseline) : std::make_unique<ClassifierSegmenter>(baseline);
        std::vector<std::optional<ProbMask>> slots(split.rest.entries.size());
        parallel_for(slots.size(), jobs, [&](std::size_t i, unsigned) {
          slots[i] = quantize_prob(seg->predict(load_image(split.rest.resolve(split.rest.entries[i].image_path))));
        });
        std::vector<ProbMask> out;
        out.reserve(slots.size());
        for (auto& s : slots) out.push_back(std::move(*s));
        return out;
      });
    }

    const BackendConfig backend = seeded_backend(cfg.backend, seed);
    for (const EvalPromptMode mode : cfg.eval_prompt_modes) {
      if (mode == EvalPromptMode::AutoNone) continue;
      PromptSpec spec = cfg.prompt_spec;
      spec.mode = mode == EvalPromptMode::Box ? PromptMode::Box : PromptMode::Points;
      const fs::path mode_dir = seed_dir / to_string(mode);

      WeakLabelBatch batch;
      {
        StageTimer t(record, hooks, stage::kWeakLabel);
        batch = in_stage(stage::kWeakLabel, [&] {
          return label_pool(split.rest, coarse, split.hidden, spec, backend, cfg.tau_filter, mode_dir / "weak_labels",
                            record.config_hash, jobs);
        });
        DatasetManifest candidates = with_absolute_root(split.rest);
        candidates.name = dataset_name + ":candidates(" + to_string(mode) + ")";
        candidates.entries = batch.candidates;
        in_stage(stage::kWeakLabel, [&] {
          save_manifest(candidates, mode_dir / "manifests" / "candidates.manifest");
          return 0;
        });
        record.counts += batch.counts;
      }

      for (const std::size_t target : cfg.n_weak_targets) {
        std::vector<ManifestEntry> weak = take_accepted(batch.candidates, target);
        if (weak.size() < target) {
          record.warnings.push_back("seed " + std::to_string(seed) + " " + to_string(mode) + ": target " +
                                    std::to_string(target) + " has only " + std::to_string(weak.size()) +
                                    " accepted weak labels");
        }
        DatasetManifest augmented;
        {
          StageTimer t(record, hooks, stage::kAssemble);
          augmented = in_stage(stage::kAssemble, [&] {
            DatasetManifest a = assemble_augmented(with_absolute_root(split.gold), weak);
            save_manifest(a, mode_dir / "manifests" / ("augmented_" + std::to_string(target) + ".manifest"));
            return a;
          });
        }
        PixelClassifier model = baseline;
        if (!weak.empty()) {
          StageTimer t(record, hooks, stage::kRefit);
          model = in_stage(stage::kRefit, [&] {
            const auto train = load_labeled(augmented);
            return fit_classifier(train, cfg.trainer, fit_seed(seed));
          });
        }
        Evaluation ev;
        {
          StageTimer t(record, hooks, stage::kEvaluate);
          ev = weak.empty() ? base_eval : evaluate_model(model, std::span<const LabeledImage>(test), cfg.prompt_spec.binarize_tau);
        }
        result.rows.push_back(make_row(cfg, dataset_name, seed, mode, weak.size(), target, ev, test.size()));
      }
    }
  }
  return result;
}

namespace {

EvalPromptMode first_prompted_mode(const PipelineConfig& cfg) {
  for (auto m : cfg.eval_prompt_modes)
    if (m != EvalPromptMode::AutoNone) return m;
  return EvalPromptMode::Box;
}

std::size_t max_target(const PipelineConfig& cfg) {
  return cfg.n_weak_targets.empty() ? 0 : cfg.n_weak_targets.back();
}

}  // namespace

PipelineResult run_gold_sweep(const PipelineConfig& cfg, const std::vector<std::size_t>& gold_counts, std::size_t n_weak,
                              const RunOptions& options) {
  if (gold_counts.empty()) throw PipelineError("sweep", "gold_counts must not be empty");
  PipelineResult out;
  for (const std::size_t count : gold_counts) {
    PipelineConfig sub = cfg;
    sub.n_gold = count;
    sub.n_weak_targets = {0, n_weak};
    if (n_weak == 0) sub.n_weak_targets = {0};
    sub.eval_prompt_modes = {first_prompted_mode(cfg)};
    sub.out_dir = cfg.out_dir / ("gold_" + std::to_string(count));
    PipelineResult r = run_pipeline(sub, options);
    out.rows.insert(out.rows.end(), r.rows.begin(), r.rows.end());
    out.record.merge(r.record);
  }
  out.record.config_hash = config_hash(cfg);
  return out;
}

PipelineResult run_fidelity_sweep(const PipelineConfig& cfg, const std::vector<FidelityPreset>& presets,
                                  const RunOptions& options) {
  if (presets.empty()) throw PipelineError("sweep", "preset list must not be empty");
  PipelineResult out;
  for (const auto& preset : presets) {
    PipelineConfig sub = cfg;
    sub.backend = BackendConfig{};
    sub.backend.kind = BackendKind::MockOracle;
    sub.backend.preset = preset.name;
    sub.backend.fidelity = preset.fidelity;
    sub.n_weak_targets = {0, max_target(cfg)};
    if (max_target(cfg) == 0) sub.n_weak_targets = {0};
    sub.eval_prompt_modes = {first_prompted_mode(cfg)};
    sub.out_dir = cfg.out_dir / ("fidelity_" + preset.name);
    PipelineResult r = run_pipeline(sub, options);
    out.rows.insert(out.rows.end(), r.rows.begin(), r.rows.end());
    out.record.merge(r.record);
  }
  out.record.config_hash = config_hash(cfg);
  return out;
}

PipelineResult run_strategy_comparison(const PipelineConfig& cfg, const RunOptions& options) {
  PipelineResult out;
  for (const auto strategy : {PromptStrategy::Coarse, PromptStrategy::Darkest, PromptStrategy::FullBox}) {
    PipelineConfig sub = cfg;
    sub.prompt_spec.strategy = strategy;
    sub.prompt_spec.mode = PromptMode::Box;
    sub.eval_prompt_modes = {EvalPromptMode::Box};
    sub.n_weak_targets = {0, max_target(cfg)};
    if (max_target(cfg) == 0) sub.n_weak_targets = {0};
    sub.out_dir = cfg.out_dir / ("strategy_" + to_string(strategy));
    PipelineResult r = run_pipeline(sub, options);
    out.rows.insert(out.rows.end(), r.rows.begin(), r.rows.end());
    out.record.merge(r.record);
  }
  out.record.config_hash = config_hash(cfg);
  return out;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

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
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::string rows_to_csv(const std::vector<EvalRow>& rows) {
  std::string out = std::string(kRowsCsvHeader) + "\n";
  for (const auto& r : rows) {
    out += csv_field(r.dataset) + ',' + std::to_string(r.n_gold) + ',' + std::to_string(r.n_weak) + ',' +
           to_string(r.prompt_mode) + ',' + csv_field(r.strategy) + ',' + csv_field(r.backend) + ',' + std::to_string(r.seed) +
           ',' + fixed(r.mean_dice, 6) + ',' + fixed(r.mean_iou, 6) + ',' + std::to_string(r.n_test) + '\n';
  }
  return out;
}

std::vector<EvalRow> rows_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kRowsCsvHeader) throw std::invalid_argument("rows.csv: unexpected header");
  std::vector<EvalRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 10) throw std::invalid_argument("rows.csv: expected 10 fields in '" + line + "'");
    EvalRow r;
    r.dataset = f[0];
    r.n_gold = std::stoull(f[1]);
    r.n_weak = std::stoull(f[2]);
    r.n_weak_target = r.n_weak;
    r.prompt_mode = parse_eval_prompt_mode(f[3]);
    r.strategy = f[4];
    r.backend = f[5];
    r.seed = std::stoull(f[6]);
    r.mean_dice = std::stod(f[7]);
    r.mean_iou = std::stod(f[8]);
    r.n_test = std::stoull(f[9]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string rows_to_markdown(const std::vector<EvalRow>& rows) {
  using Key = std::tuple<std::string, std::size_t, std::string, std::string>;
  std::vector<Key> groups;
  for (const auto& r : rows) {
    Key k{r.dataset, r.n_gold, r.strategy, r.backend};
    if (std::find(groups.begin(), groups.end(), k) == groups.end()) groups.push_back(k);
  }
  std::string out;
  for (const auto& key : groups) {
    const auto& [dataset, n_gold, strategy, backend] = key;
    std::set<std::size_t> weak_counts;
    std::set<EvalPromptMode> modes;
    std::map<std::pair<std::size_t, EvalPromptMode>, std::pair<double, int>> cells;
    for (const auto& r : rows) {
      if (Key{r.dataset, r.n_gold, r.strategy, r.backend} != key) continue;
      weak_counts.insert(r.n_weak);
      modes.insert(r.prompt_mode);
      auto& c = cells[{r.n_weak, r.prompt_mode}];
      c.first += r.mean_dice;
      ++c.second;
    }
    if (!out.empty()) out += '\n';
    out += "### " + dataset + " | gold " + std::to_string(n_gold) + " | strategy " + strategy + " | backend " + backend + "\n\n";
    out += "| # GS | # Weak |";
    for (auto m : modes) out += ' ' + to_string(m) + " |";
    out += "\n|---|---|";
    for (std::size_t i = 0; i < modes.size(); ++i) out += "---|";
    out += '\n';
    for (auto w : weak_counts) {
      out += "| " + std::to_string(n_gold) + " | " + std::to_string(w) + " |";
      for (auto m : modes) {
        const auto it = cells.find({w, m});
        out += ' ' + (it == cells.end() ? std::string("-") : fixed(it->second.first / it->second.second, 4)) + " |";
      }
      out += '\n';
    }
  }
  return out;
}

ReportPaths emit_report(const std::vector<EvalRow>& rows, const RunRecord& record, const fs::path& out_dir) {
  if (rows.empty()) throw std::invalid_argument("emit_report needs at least one row");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create " + out_dir.string() + ": " + ec.message());
  ReportPaths paths{out_dir / "rows.csv", out_dir / "report.md", out_dir / "run.json"};
  const auto write = [](const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    f << text;
    if (!f) throw std::runtime_error("cannot write " + p.string());
  };
  write(paths.csv, rows_to_csv(rows));
  write(paths.markdown, rows_to_markdown(rows));
  write(paths.record, to_json(record).dump(2) + "\n");
  return paths;
}

}  // namespace wlforge
