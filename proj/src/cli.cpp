#include "wlforge/cli.hpp"

#include "wlforge/config.hpp"
#include "wlforge/parallel.hpp"
#include "wlforge/pipeline.hpp"
#include "wlforge/raster_io.hpp"
#include "wlforge/random.hpp"
#include "wlforge/sidecar.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

namespace wlforge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything any command can receive. Unused fields stay at their defaults.
struct Options {
  // global
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  std::string backend;
  bool dry_run = false;
  unsigned jobs = 0;

  // pipeline overrides
  std::string dataset;
  std::size_t n_gold = 0;
  std::vector<std::size_t> n_weak_targets;
  std::vector<std::string> modes;
  std::string strategy;
  std::string mode;
  double tau_filter = 0.0;

  // stage inputs
  std::size_t n_train = 130;
  std::size_t n_test = 30;
  std::string synth_config;
  std::string train;
  std::string model;
  std::string manifest;
  std::string coarse;
  std::string coarse_dir;
  std::string image;
  std::string prompts;
  std::string gold;
  std::string candidates;
  std::size_t n_weak = 50;
  std::string test;
  std::vector<std::size_t> gold_counts{3, 5, 10, 20};
  std::vector<std::string> presets{"medsam-like", "sam-like"};
  std::string rows;
  std::string verdicts;
};

struct Context {
  Options opt;
  const CLI::App* app = nullptr;
  const CLI::App* sub = nullptr;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;

  /// True when the flag was passed (or its environment variable is set).
  [[nodiscard]] bool given(const std::string& name) const {
    const CLI::Option* o = find(sub, name);
    if (!o) o = find(app, name);
    if (!o) return false;
    return o->count() > 0 || (!o->get_envname().empty() && std::getenv(o->get_envname().c_str()));
  }
  static const CLI::Option* find(const CLI::App* a, const std::string& name) {
    try {
      return a->get_option(name);
    } catch (const CLI::OptionNotFound&) {
      return nullptr;
    }
  }
  [[nodiscard]] unsigned jobs() const { return opt.jobs > 0 ? opt.jobs : default_jobs(); }
};

void require(const Context& ctx, const std::string& flag, const std::string& why = "") {
  if (!ctx.given(flag)) throw UsageError(ctx.sub->get_name() + " requires " + flag + (why.empty() ? "" : " " + why));
}

void forbid_together(const Context& ctx, const std::string& a, const std::string& b) {
  if (ctx.given(a) && ctx.given(b)) throw UsageError(a + " and " + b + " cannot be combined");
}

BackendConfig parse_backend(const std::string& text) {
  BackendConfig b;
  const std::string ext = "external:";
  if (text.rfind(ext, 0) == 0) {
    b.kind = BackendKind::External;
    std::istringstream words(text.substr(ext.size()));
    for (std::string w; words >> w;) b.external.command.push_back(w);
    if (b.external.command.empty()) throw UsageError("--backend external: needs a command");
    return b;
  }
  try {
    const FidelityPreset p = fidelity_preset(text);
    b.kind = BackendKind::MockOracle;
    b.preset = p.name;
    b.fidelity = p.fidelity;
  } catch (const std::exception&) {
    throw UsageError("unknown backend '" + text + "' (medsam-like, sam-like, perfect or external:<command>)");
  }
  return b;
}

/// Config file (or defaults) with command-line overrides applied.
PipelineConfig resolve_config(const Context& ctx) {
  const Options& o = ctx.opt;
  PipelineConfig cfg;
  if (!o.config.empty()) {
    try {
      cfg = load_pipeline_config(o.config);
    } catch (const ConfigError& e) {
      throw UsageError(std::string("config: ") + e.what());
    }
  }
  if (ctx.given("--seed")) cfg.seeds = {o.seed};
  if (ctx.given("--out")) cfg.out_dir = o.out;
  if (ctx.given("--backend")) cfg.backend = parse_backend(o.backend);
  const auto has = [&](const char* flag) { return ctx.given(flag); };
  try {
    if (has("--dataset")) cfg.dataset = o.dataset;
    if (has("--n-gold")) cfg.n_gold = o.n_gold;
    if (has("--n-weak-targets")) cfg.n_weak_targets = o.n_weak_targets;
    if (has("--modes")) {
      cfg.eval_prompt_modes.clear();
      for (const auto& m : o.modes) cfg.eval_prompt_modes.push_back(parse_eval_prompt_mode(m));
    }
    if (has("--strategy")) cfg.prompt_spec.strategy = parse_prompt_strategy(o.strategy);
    if (has("--mode")) cfg.prompt_spec.mode = parse_prompt_mode(o.mode);
    if (has("--tau-filter")) cfg.tau_filter = o.tau_filter;
    cfg.validate();
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

std::uint64_t run_seed(const PipelineConfig& cfg) { return cfg.seeds.front(); }

/// Shared dry-run output. Returns true when the command must stop here.
bool dry_run(const Context& ctx, const PipelineConfig& cfg, const std::vector<std::string>& plan) {
  if (!ctx.opt.dry_run) return false;
  *ctx.out << "config_hash: " << config_hash(cfg) << "\n";
  for (const auto& step : plan) *ctx.out << "plan: " << step << "\n";
  *ctx.out << "dry run: nothing written\n";
  return true;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << text;
  if (!f) throw std::runtime_error("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

RunOptions run_options(const Context& ctx) {
  RunOptions ro;
  ro.jobs = ctx.jobs();
  std::ostream* err = ctx.err;
  ro.hooks.on_stage = [err](const std::string& name) { *err << "stage " << name << "\n"; };
  return ro;
}

void print_warnings(const Context& ctx, const RunRecord& record) {
  for (const auto& w : record.warnings) *ctx.err << "warning: " << w << "\n";
}

// ---------------------------------------------------------------------------
// Commands

int cmd_synth_gen(const Context& ctx) {
  require(ctx, "--out", "(dataset directory)");
  const Options& o = ctx.opt;
  if (o.n_train == 0) throw UsageError("--n-train must be positive");
  SynthConfig sc = benchmark_synth_config();
  if (!o.synth_config.empty()) {
    try {
      sc = synth_config_from_json(json::parse(read_text(o.synth_config)));
    } catch (const std::exception& e) {
      throw UsageError(std::string("synth config: ") + e.what());
    }
  }
  if (ctx.given("--seed")) sc.seed = o.seed;
  try {
    sc.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  if (ctx.opt.dry_run) {
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json(sc).dump())));
    *ctx.out << "config_hash: " << hash << "\n";
    *ctx.out << "plan: generate " << o.n_train << " train and " << o.n_test << " test scenes into " << o.out << "\n";
    *ctx.out << "dry run: nothing written\n";
    return kExitOk;
  }
  const DatasetManifest m = generate_dataset(sc, o.n_train, o.n_test, o.out, ctx.jobs());
  *ctx.out << "wrote " << m.entries.size() << " entries to " << (fs::path(o.out) / kDatasetManifestName).string() << "\n";
  return kExitOk;
}

int cmd_select_gold(const Context& ctx) {
  require(ctx, "--out", "(manifest directory)");
  PipelineConfig cfg = resolve_config(ctx);
  if (cfg.dataset.empty()) throw UsageError("select-gold requires --dataset or a config with dataset");
  const fs::path dir = ctx.opt.out;
  if (dry_run(ctx, cfg,
              {"select " + std::to_string(cfg.n_gold) + " gold entries from " + cfg.dataset.string() + " with seed " +
                   std::to_string(run_seed(cfg)),
               "write gold, unlabeled and test manifests under " + dir.string()}))
    return kExitOk;
  const GoldSplit split = select_gold(load_manifest(cfg.dataset), cfg.n_gold, run_seed(cfg));
  save_manifest(with_absolute_root(split.gold), dir / "gold.manifest");
  save_manifest(with_absolute_root(split.rest), dir / "unlabeled.manifest");
  save_manifest(with_absolute_root(split.test), dir / "test.manifest");
  *ctx.out << "gold " << split.gold.entries.size() << ", unlabeled " << split.rest.entries.size() << ", test "
           << split.test.entries.size() << "\n";
  return kExitOk;
}

int cmd_coarse_fit(const Context& ctx) {
  require(ctx, "--train");
  require(ctx, "--model", "(output path)");
  const PipelineConfig cfg = resolve_config(ctx);
  if (dry_run(ctx, cfg, {"fit the coarse classifier on " + ctx.opt.train + " with seed " + std::to_string(run_seed(cfg)),
                         "write model to " + ctx.opt.model}))
    return kExitOk;
  const auto train = load_labeled(load_manifest(ctx.opt.train));
  const PixelClassifier model = fit_classifier(train, cfg.trainer, fit_seed(run_seed(cfg)));
  save_classifier(model, ctx.opt.model);
  *ctx.out << "trained on " << train.size() << " images\n";
  return kExitOk;
}

int cmd_coarse_predict(const Context& ctx) {
  require(ctx, "--model");
  require(ctx, "--manifest");
  require(ctx, "--out", "(probability mask directory)");
  const PipelineConfig cfg = resolve_config(ctx);
  if (dry_run(ctx, cfg, {"predict coarse masks for " + ctx.opt.manifest, "write <id>.png under " + ctx.opt.out}))
    return kExitOk;
  const PixelClassifier model = load_classifier(ctx.opt.model);
  const DatasetManifest m = load_manifest(ctx.opt.manifest);
  const fs::path dir = ctx.opt.out;
  fs::create_directories(dir);
  const ClassifierSegmenter seg(model);
  parallel_for(m.entries.size(), ctx.jobs(), [&](std::size_t i, unsigned) {
    const auto& e = m.entries[i];
    save_prob(quantize_prob(seg.predict(load_image(m.resolve(e.image_path)))), dir / (e.id + ".png"));
  });
  *ctx.out << "predicted " << m.entries.size() << " coarse masks\n";
  return kExitOk;
}

json prompt_record(const std::string& id, const PromptSpec& spec, const std::optional<std::vector<Prompt>>& prompts) {
  json j = {{"id", id}, {"strategy", to_string(spec.strategy)}, {"prompt_mode", to_string(spec.mode)}};
  if (!prompts) {
    j["filter_reason"] = to_string(FilterReason::EmptyCoarse);
    return j;
  }
  json list = json::array();
  for (const auto& p : *prompts) list.push_back(prompt_to_json(p));
  j["prompts"] = list;
  return j;
}

int cmd_prompt(const Context& ctx) {
  forbid_together(ctx, "--coarse", "--manifest");
  forbid_together(ctx, "--coarse", "--coarse-dir");
  const bool single = ctx.given("--coarse");
  if (!single) {
    require(ctx, "--manifest", "(or --coarse for a single mask)");
    require(ctx, "--out", "(prompts file)");
  }
  const PipelineConfig cfg = resolve_config(ctx);
  const PromptSpec& spec = cfg.prompt_spec;
  if (!single && spec.strategy == PromptStrategy::Coarse && !ctx.given("--coarse-dir"))
    throw UsageError("prompt --manifest with the coarse strategy requires --coarse-dir");
  if (single && spec.strategy != PromptStrategy::Coarse && !ctx.given("--image"))
    throw UsageError("the " + to_string(spec.strategy) + " strategy requires --image");

  if (single) {
    if (dry_run(ctx, cfg, {"build " + to_string(spec.mode) + " prompts for " + ctx.opt.coarse}))
      return kExitOk;
    const ProbMask coarse = load_prob(ctx.opt.coarse);
    const GrayImage img = ctx.given("--image") ? load_image(ctx.opt.image)
                                               : GrayImage(Plane<double>::Zero(coarse.height(), coarse.width()));
    const auto prompts = build_prompts(coarse, img, spec);
    if (!prompts) {
      *ctx.out << "filtered: " << to_string(FilterReason::EmptyCoarse) << "\n";
      return kExitOk;
    }
    const json rec = prompt_record(fs::path(ctx.opt.coarse).stem().string(), spec, prompts);
    if (ctx.given("--out")) {
      write_text(ctx.opt.out, rec.dump() + "\n");
    } else {
      *ctx.out << rec.at("prompts").dump() << "\n";
    }
    return kExitOk;
  }

  if (dry_run(ctx, cfg, {"build " + to_string(spec.mode) + " prompts for every entry of " + ctx.opt.manifest,
                         "write prompts to " + ctx.opt.out}))
    return kExitOk;
  const DatasetManifest m = load_manifest(ctx.opt.manifest);
  std::vector<std::string> lines(m.entries.size());
  parallel_for(m.entries.size(), ctx.jobs(), [&](std::size_t i, unsigned) {
    const auto& e = m.entries[i];
    const GrayImage img = load_image(m.resolve(e.image_path));
    const ProbMask coarse = ctx.given("--coarse-dir") ? load_prob(fs::path(ctx.opt.coarse_dir) / (e.id + ".png"))
                                                      : ProbMask(Plane<double>::Zero(img.height(), img.width()));
    lines[i] = prompt_record(e.id, spec, build_prompts(coarse, img, spec)).dump();
  });
  std::string text;
  std::size_t filtered = 0;
  for (const auto& l : lines) {
    text += l + "\n";
    filtered += l.find("\"filter_reason\"") != std::string::npos;
  }
  write_text(ctx.opt.out, text);
  *ctx.out << "prompted " << m.entries.size() - filtered << ", filtered: " << filtered << " "
           << to_string(FilterReason::EmptyCoarse) << "\n";
  return kExitOk;
}

struct PromptLine {
  std::string id;
  std::string strategy;
  std::string prompt_mode;
  std::optional<std::vector<Prompt>> prompts;
};

std::map<std::string, PromptLine> read_prompt_file(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::map<std::string, PromptLine> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      PromptLine p;
      p.id = j.at("id").get<std::string>();
      p.strategy = j.at("strategy").get<std::string>();
      p.prompt_mode = j.at("prompt_mode").get<std::string>();
      if (j.contains("prompts")) {
        p.prompts.emplace();
        for (const auto& pj : j.at("prompts")) p.prompts->push_back(prompt_from_json(pj));
      }
      out.emplace(p.id, std::move(p));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

int cmd_weaklabel(const Context& ctx) {
  require(ctx, "--manifest", "(unlabeled manifest)");
  require(ctx, "--prompts");
  require(ctx, "--out", "(weak label directory)");
  const PipelineConfig cfg = resolve_config(ctx);
  const BackendConfig backend = seeded_backend(cfg.backend, run_seed(cfg));
  const fs::path dir = ctx.opt.out;
  if (dry_run(ctx, cfg, {"segment every prompted entry of " + ctx.opt.manifest + " with " + backend.name(),
                         "write <id>.png and weak_labels.manifest under " + dir.string()}))
    return kExitOk;

  const DatasetManifest pool = load_manifest(ctx.opt.manifest);
  const auto prompts = read_prompt_file(ctx.opt.prompts);
  const HiddenGroundTruth hidden = hidden_ground_truth(pool);
  const std::string hash = config_hash(cfg);
  for (const auto& e : pool.entries)
    if (!prompts.count(e.id)) throw std::runtime_error("no prompt record for entry '" + e.id + "'");

  fs::create_directories(dir);
  const unsigned jobs = ctx.jobs();
  std::vector<std::unique_ptr<PromptableSegmenter>> segmenters(jobs);
  parallel_for(pool.entries.size(), jobs, [&](std::size_t i, unsigned worker) {
    const auto& e = pool.entries[i];
    const PromptLine& p = prompts.at(e.id);
    if (!p.prompts) return;
    if (!segmenters[worker]) segmenters[worker] = make_segmenter(backend);
    const GrayImage img = load_image(pool.resolve(e.image_path));
    const auto gt = hidden.handle(e.id);
    save_mask(segmenters[worker]->segment(img, *p.prompts, gt ? &*gt : nullptr), dir / (e.id + ".png"));
  });

  DatasetManifest labels = with_absolute_root(pool);
  labels.name = pool.name + ":weak_labels";
  labels.entries.clear();
  std::size_t segmented = 0;
  for (const auto& e : pool.entries) {
    const PromptLine& p = prompts.at(e.id);
    PromptSpec spec = cfg.prompt_spec;
    spec.strategy = parse_prompt_strategy(p.strategy);
    spec.mode = parse_prompt_mode(p.prompt_mode);
    Provenance prov = make_provenance(spec, backend, hash, FilterReason::EmptyCoarse);
    if (p.prompts) {
      prov.filter_reason.clear();  // decided by `filter`
      ++segmented;
    }
    labels.entries.push_back(candidate_entry(e, dir / (e.id + ".png"), std::move(prov)));
  }
  save_manifest(labels, dir / "weak_labels.manifest");
  *ctx.out << "segmented " << segmented << ", filtered: " << pool.entries.size() - segmented << " "
           << to_string(FilterReason::EmptyCoarse) << "\n";
  return kExitOk;
}

int cmd_filter(const Context& ctx) {
  require(ctx, "--manifest", "(weak label manifest)");
  require(ctx, "--out", "(candidates manifest)");
  const PipelineConfig cfg = resolve_config(ctx);
  if (dry_run(ctx, cfg, {"apply the coverage filter (tau " + std::to_string(cfg.tau_filter) + ") to " + ctx.opt.manifest,
                         "write candidates to " + ctx.opt.out}))
    return kExitOk;
  DatasetManifest m = load_manifest(ctx.opt.manifest);
  std::vector<std::optional<FilterReason>> reasons(m.entries.size());
  parallel_for(m.entries.size(), ctx.jobs(), [&](std::size_t i, unsigned) {
    const auto& e = m.entries[i];
    if (e.label_kind != LabelKind::Weak) return;
    if (!e.mask_path || !e.provenance) throw ManifestError("weak entry '" + e.id + "' needs a mask and provenance");
    reasons[i] = accept_weak_label(load_mask(m.resolve(*e.mask_path)), cfg.tau_filter).reason;
  });
  std::map<std::string, std::size_t> tally;
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    auto& e = m.entries[i];
    if (reasons[i]) e.provenance->filter_reason = to_string(*reasons[i]);
    if (e.provenance) ++tally[e.provenance->filter_reason];
  }
  save_manifest(m, ctx.opt.out);
  for (const auto& [reason, count] : tally) *ctx.out << reason << ": " << count << "\n";
  return kExitOk;
}

int cmd_assemble(const Context& ctx) {
  require(ctx, "--gold");
  require(ctx, "--candidates");
  require(ctx, "--out", "(augmented manifest)");
  const PipelineConfig cfg = resolve_config(ctx);
  const std::size_t n = ctx.opt.n_weak;
  if (dry_run(ctx, cfg, {"assemble " + ctx.opt.gold + " with up to " + std::to_string(n) + " accepted weak labels",
                         "write augmented manifest to " + ctx.opt.out}))
    return kExitOk;
  const DatasetManifest gold = load_manifest(ctx.opt.gold);
  const auto weak = take_accepted(load_manifest(ctx.opt.candidates).entries, n);
  if (weak.size() < n)
    *ctx.err << "warning: only " << weak.size() << " accepted weak labels for target " << n << "\n";
  save_manifest(assemble_augmented(with_absolute_root(gold), weak), ctx.opt.out);
  *ctx.out << "gold " << gold.entries.size() << ", weak " << weak.size() << "\n";
  return kExitOk;
}

int cmd_evaluate(const Context& ctx) {
  require(ctx, "--model");
  require(ctx, "--test");
  const PipelineConfig cfg = resolve_config(ctx);
  if (dry_run(ctx, cfg, {"evaluate " + ctx.opt.model + " on " + ctx.opt.test})) return kExitOk;
  const PixelClassifier model = load_classifier(ctx.opt.model);
  const DatasetManifest test = load_manifest(ctx.opt.test);
  const Evaluation ev = evaluate_model(model, test, cfg.prompt_spec.binarize_tau);
  char buf[128];
  std::snprintf(buf, sizeof buf, "mean_dice=%.6f mean_iou=%.6f n_test=%zu", ev.mean_dice, ev.mean_iou, test.entries.size());
  *ctx.out << buf << "\n";
  return kExitOk;
}

PipelineConfig pipeline_config(const Context& ctx) {
  PipelineConfig cfg = resolve_config(ctx);
  if (cfg.dataset.empty()) throw UsageError(ctx.sub->get_name() + " requires --dataset or a config with dataset");
  return cfg;
}

int finish_run(const Context& ctx, const PipelineConfig& cfg, const PipelineResult& r) {
  const ReportPaths paths = emit_report(r.rows, r.record, cfg.out_dir);
  print_warnings(ctx, r.record);
  *ctx.out << rows_to_markdown(r.rows);
  *ctx.out << "wrote " << paths.csv.string() << "\n";
  return kExitOk;
}

int cmd_pipeline(const Context& ctx) {
  const PipelineConfig cfg = pipeline_config(ctx);
  std::vector<std::string> plan;
  for (const auto s : cfg.seeds) {
    plan.push_back("seed " + std::to_string(s) + ": select " + std::to_string(cfg.n_gold) + " gold from " +
                   cfg.dataset.string() + ", weak targets " + join(cfg.n_weak_targets));
  }
  plan.push_back("write rows.csv, report.md and run.json under " + cfg.out_dir.string());
  if (dry_run(ctx, cfg, plan)) return kExitOk;
  return finish_run(ctx, cfg, run_pipeline(cfg, run_options(ctx)));
}

int cmd_sweep_gold(const Context& ctx) {
  const PipelineConfig cfg = pipeline_config(ctx);
  if (ctx.opt.gold_counts.empty()) throw UsageError("--gold-counts must not be empty");
  if (dry_run(ctx, cfg, {"gold counts " + join(ctx.opt.gold_counts) + " with " + std::to_string(ctx.opt.n_weak) + " weak labels",
                         "write reports under " + cfg.out_dir.string()}))
    return kExitOk;
  return finish_run(ctx, cfg, run_gold_sweep(cfg, ctx.opt.gold_counts, ctx.opt.n_weak, run_options(ctx)));
}

int cmd_sweep_fidelity(const Context& ctx) {
  const PipelineConfig cfg = pipeline_config(ctx);
  std::vector<FidelityPreset> presets;
  for (const auto& name : ctx.opt.presets) {
    try {
      presets.push_back(fidelity_preset(name));
    } catch (const std::exception&) {
      throw UsageError("unknown preset '" + name + "'");
    }
  }
  if (presets.empty()) throw UsageError("--presets must not be empty");
  std::string names;
  for (const auto& p : presets) names += (names.empty() ? "" : ",") + p.name;
  if (dry_run(ctx, cfg, {"fidelity presets " + names, "write reports under " + cfg.out_dir.string()})) return kExitOk;
  return finish_run(ctx, cfg, run_fidelity_sweep(cfg, presets, run_options(ctx)));
}

int cmd_compare_strategies(const Context& ctx) {
  const PipelineConfig cfg = pipeline_config(ctx);
  if (dry_run(ctx, cfg, {"strategies coarse,darkest,full_box in box mode", "write reports under " + cfg.out_dir.string()}))
    return kExitOk;
  return finish_run(ctx, cfg, run_strategy_comparison(cfg, run_options(ctx)));
}

int cmd_report(const Context& ctx) {
  forbid_together(ctx, "--rows", "--verdicts");
  if (!ctx.given("--rows") && !ctx.given("--verdicts")) throw UsageError("report requires --rows or --verdicts");
  const PipelineConfig cfg = resolve_config(ctx);
  if (ctx.given("--verdicts")) {
    if (dry_run(ctx, cfg, {"print filter verdict counts of " + ctx.opt.verdicts})) return kExitOk;
    *ctx.out << verdict_stats(load_manifest(ctx.opt.verdicts));
    return kExitOk;
  }
  const bool to_file = ctx.given("--out");
  if (dry_run(ctx, cfg, {"render " + ctx.opt.rows + (to_file ? " into " + ctx.opt.out + "/report.md" : "")})) return kExitOk;
  const std::string md = rows_to_markdown(rows_from_csv(read_text(ctx.opt.rows)));
  if (to_file) write_text(fs::path(ctx.opt.out) / "report.md", md);
  *ctx.out << md;
  return kExitOk;
}

}  // namespace

std::string verdict_stats(const DatasetManifest& manifest) {
  if (manifest.entries.empty()) return "no weak-label records\n";
  std::vector<std::pair<std::string, std::size_t>> counts;
  std::size_t total = 0;
  for (const auto& e : manifest.entries) {
    if (!e.provenance) continue;
    const std::string reason = e.provenance->filter_reason.empty() ? "unfiltered" : e.provenance->filter_reason;
    auto it = std::find_if(counts.begin(), counts.end(), [&](const auto& c) { return c.first == reason; });
    if (it == counts.end()) {
      counts.emplace_back(reason, 1);
    } else {
      ++it->second;
    }
    ++total;
  }
  if (total == 0) throw ManifestError("manifest '" + manifest.name + "' has no provenance records");
  std::string out = "| filter_reason | count |\n|---|---|\n";
  for (const auto& [reason, n] : counts) out += "| " + reason + " | " + std::to_string(n) + " |\n";
  out += "total: " + std::to_string(total) + "\n";
  return out;
}

int parse_and_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Context ctx;
  ctx.out = &out;
  ctx.err = &err;
  Options& o = ctx.opt;

  CLI::App app{"Weak-label generation toolkit for scarce-label segmentation", "wlforge"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.add_option("--config", o.config, "PipelineConfig JSON; flags override its fields")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "Run seed (default from WLFORGE_SEED)")->envname("WLFORGE_SEED");
  app.add_option("--out", o.out, "Output file or directory of the command");
  app.add_option("--backend", o.backend, "medsam-like, sam-like, perfect or external:<command>");
  app.add_flag("--dry-run", o.dry_run, "Print the config hash and planned actions, write nothing");
  app.add_option("--jobs", o.jobs, "Worker threads (default: available cores)")->check(CLI::PositiveNumber);

  const auto run_flags = [&](CLI::App* s) {
    s->add_option("--dataset", o.dataset, "Dataset manifest");
    s->add_option("--n-gold", o.n_gold, "Gold-standard images per run")->check(CLI::PositiveNumber);
    s->add_option("--n-weak-targets", o.n_weak_targets, "Comma-separated weak-label counts")->delimiter(',');
    s->add_option("--modes", o.modes, "Comma-separated prompt modes (auto_none, box, points)")->delimiter(',');
    s->add_option("--strategy", o.strategy, "coarse, darkest or full_box");
    s->add_option("--tau-filter", o.tau_filter, "Coverage filter threshold");
  };

  std::map<std::string, int (*)(const Context&)> handlers;
  const auto command = [&](const std::string& name, const std::string& help, int (*fn)(const Context&)) {
    handlers[name] = fn;
    return app.add_subcommand(name, help);
  };

  auto* synth = command("synth-gen", "Generate the synthetic lesion corpus", cmd_synth_gen);
  synth->add_option("--n-train", o.n_train, "Training scenes (gold kind)");
  synth->add_option("--n-test", o.n_test, "Test scenes");
  synth->add_option("--synth-config", o.synth_config, "SynthConfig JSON")->check(CLI::ExistingFile);

  auto* sel = command("select-gold", "Split a dataset into gold, unlabeled and test manifests", cmd_select_gold);
  sel->add_option("--dataset", o.dataset, "Dataset manifest");
  sel->add_option("--n-gold", o.n_gold, "Gold-standard images")->check(CLI::PositiveNumber);

  auto* fit = command("coarse-fit", "Train the coarse classifier", cmd_coarse_fit);
  fit->add_option("--train", o.train, "Manifest whose entries all carry masks");
  fit->add_option("--model", o.model, "Output model JSON");

  auto* pred = command("coarse-predict", "Write coarse probability masks", cmd_coarse_predict);
  pred->add_option("--model", o.model, "Model JSON");
  pred->add_option("--manifest", o.manifest, "Images to predict");

  auto* prm = command("prompt", "Build prompts from coarse masks", cmd_prompt);
  prm->add_option("--coarse", o.coarse, "Single coarse probability PNG");
  prm->add_option("--image", o.image, "Image for the single-mask form");
  prm->add_option("--manifest", o.manifest, "Batch form: manifest of images");
  prm->add_option("--coarse-dir", o.coarse_dir, "Batch form: directory of <id>.png coarse masks");
  prm->add_option("--mode", o.mode, "box or points");
  prm->add_option("--strategy", o.strategy, "coarse, darkest or full_box");

  auto* wl = command("weaklabel", "Run the promptable segmenter on prompted images", cmd_weaklabel);
  wl->add_option("--manifest", o.manifest, "Unlabeled manifest");
  wl->add_option("--prompts", o.prompts, "Prompts file from `prompt`");

  auto* flt = command("filter", "Apply the coverage filter to weak labels", cmd_filter);
  flt->add_option("--manifest", o.manifest, "Weak label manifest from `weaklabel`");
  flt->add_option("--tau-filter", o.tau_filter, "Coverage filter threshold");

  auto* asm_ = command("assemble", "Combine gold entries with accepted weak labels", cmd_assemble);
  asm_->add_option("--gold", o.gold, "Gold manifest");
  asm_->add_option("--candidates", o.candidates, "Filtered candidates manifest");
  asm_->add_option("--n-weak", o.n_weak, "Weak labels to take");

  auto* ev = command("evaluate", "Score a model on a test manifest", cmd_evaluate);
  ev->add_option("--model", o.model, "Model JSON");
  ev->add_option("--test", o.test, "Test manifest");

  run_flags(command("pipeline", "Run the full pipeline and write reports", cmd_pipeline));

  auto* sg = command("sweep-gold", "Gold-count sweep with a fixed weak budget", cmd_sweep_gold);
  run_flags(sg);
  sg->add_option("--gold-counts", o.gold_counts, "Comma-separated gold counts")->delimiter(',');
  sg->add_option("--n-weak", o.n_weak, "Weak labels per count");

  auto* sf = command("sweep-fidelity", "Compare mock backend presets", cmd_sweep_fidelity);
  run_flags(sf);
  sf->add_option("--presets", o.presets, "Comma-separated preset names")->delimiter(',');

  run_flags(command("compare-strategies", "Compare prompt strategies in box mode", cmd_compare_strategies));

  auto* rep = command("report", "Render rows.csv or filter verdict counts", cmd_report);
  rep->add_option("--rows", o.rows, "rows.csv from a run");
  rep->add_option("--verdicts", o.verdicts, "Manifest with provenance records");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  ctx.app = &app;
  ctx.sub = app.get_subcommands().front();
  const std::string name = ctx.sub->get_name();
  try {
    return handlers.at(name)(ctx);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << ctx.sub->help();
    return kExitUsage;
  } catch (const PipelineError& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: stage " << name << ": " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace wlforge
