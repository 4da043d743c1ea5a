#include "wlforge/datasets.hpp"

#include "wlforge/parallel.hpp"
#include "wlforge/random.hpp"
#include "wlforge/raster_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace wlforge {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(LabelKind kind) {
  switch (kind) {
    case LabelKind::Gold: return "gold";
    case LabelKind::Weak: return "weak";
    case LabelKind::Unlabeled: return "unlabeled";
    case LabelKind::Test: return "test";
  }
  return "unlabeled";
}

LabelKind parse_label_kind(const std::string& text) {
  for (auto k : {LabelKind::Gold, LabelKind::Weak, LabelKind::Unlabeled, LabelKind::Test})
    if (to_string(k) == text) return k;
  throw ManifestError("unknown label_kind '" + text + "'");
}

fs::path DatasetManifest::resolve(const fs::path& p) const {
  if (p.is_absolute()) return p;
  const fs::path r = root.is_absolute() ? root : base_dir / root;
  return (r / p).lexically_normal();
}

std::vector<const ManifestEntry*> DatasetManifest::of_kind(LabelKind kind) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.label_kind == kind) out.push_back(&e);
  return out;
}

void DatasetManifest::validate(bool strict) const {
  std::set<std::string> ids;
  for (const auto& e : entries) {
    if (e.id.empty()) throw ManifestError("manifest entry with empty id");
    if (!ids.insert(e.id).second) throw ManifestError("duplicate manifest id '" + e.id + "'");
    const bool needs_mask = e.label_kind != LabelKind::Unlabeled;
    if (needs_mask && !e.mask_path) throw ManifestError("entry '" + e.id + "' of kind " + to_string(e.label_kind) + " lacks mask_path");
    if (!needs_mask && e.mask_path) throw ManifestError("unlabeled entry '" + e.id + "' must not carry mask_path");
    if (e.label_kind == LabelKind::Weak && !e.provenance) throw ManifestError("weak entry '" + e.id + "' lacks provenance");
    for (const fs::path* p : {&e.image_path, e.mask_path ? &*e.mask_path : nullptr}) {
      if (!p) continue;
      if (p->empty()) throw ManifestError("entry '" + e.id + "' has an empty path");
      if (!p->is_absolute()) {
        const fs::path norm = p->lexically_normal();
        if (!norm.empty() && *norm.begin() == "..") throw ManifestError("entry '" + e.id + "' path escapes the root");
      }
      if (strict && !fs::exists(resolve(*p))) throw ManifestError("entry '" + e.id + "' references missing file " + resolve(*p).string());
    }
  }
}

namespace {

json provenance_to_json(const Provenance& p) {
  return {{"strategy", p.strategy},       {"prompt_mode", p.prompt_mode}, {"backend", p.backend},
          {"fidelity_preset", p.fidelity_preset}, {"config_hash", p.config_hash}, {"filter_reason", p.filter_reason}};
}

Provenance provenance_from_json(const json& j) {
  static const std::set<std::string> known{"strategy", "prompt_mode", "backend", "fidelity_preset", "config_hash", "filter_reason"};
  for (const auto& [k, _] : j.items())
    if (!known.count(k)) throw ManifestError("unknown provenance field '" + k + "'");
  Provenance p;
  p.strategy = j.value("strategy", "");
  p.prompt_mode = j.value("prompt_mode", "");
  p.backend = j.value("backend", "");
  p.fidelity_preset = j.value("fidelity_preset", "");
  p.config_hash = j.value("config_hash", "");
  p.filter_reason = j.value("filter_reason", "");
  return p;
}

json entry_to_json(const ManifestEntry& e) {
  json j = {{"id", e.id}, {"image_path", e.image_path.generic_string()}, {"label_kind", to_string(e.label_kind)}};
  if (e.mask_path) j["mask_path"] = e.mask_path->generic_string();
  if (e.provenance) j["provenance"] = provenance_to_json(*e.provenance);
  return j;
}

ManifestEntry entry_from_json(const json& j) {
  static const std::set<std::string> known{"id", "image_path", "mask_path", "label_kind", "provenance"};
  if (!j.is_object()) throw ManifestError("manifest record is not an object");
  for (const auto& [k, _] : j.items())
    if (!known.count(k)) throw ManifestError("unknown manifest field '" + k + "'");
  ManifestEntry e;
  e.id = j.at("id").get<std::string>();
  e.image_path = j.at("image_path").get<std::string>();
  e.label_kind = parse_label_kind(j.at("label_kind").get<std::string>());
  if (j.contains("mask_path")) e.mask_path = fs::path(j.at("mask_path").get<std::string>());
  if (j.contains("provenance")) e.provenance = provenance_from_json(j.at("provenance"));
  return e;
}

}  // namespace

DatasetManifest load_manifest(const fs::path& path, bool strict_validate) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest " + path.string());
  DatasetManifest m;
  m.base_dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (!header) {
        if (!j.is_object() || j.value("version", 0) != kManifestVersion || !j.contains("name") || !j.contains("root"))
          throw ManifestError("header must be {name, root, version:1}");
        m.name = j.at("name").get<std::string>();
        m.root = j.at("root").get<std::string>();
        header = true;
        continue;
      }
      m.entries.push_back(entry_from_json(j));
    } catch (const json::exception& e) {
      throw ManifestError(path.string() + ":" + std::to_string(lineno) + ": malformed record: " + e.what());
    } catch (const ManifestError& e) {
      throw ManifestError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!header) throw ManifestError(path.string() + ": missing header record");
  m.validate(strict_validate);
  return m;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  manifest.validate(false);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ManifestError("cannot write manifest " + path.string());
  out << json{{"name", manifest.name}, {"root", manifest.root.generic_string()}, {"version", kManifestVersion}}.dump() << '\n';
  for (const auto& e : manifest.entries) out << entry_to_json(e).dump() << '\n';
  if (!out) throw ManifestError("short write to manifest " + path.string());
}

std::optional<GroundTruthRef> HiddenGroundTruth::handle(const std::string& id) const {
  const auto it = paths_.find(id);
  if (it == paths_.end()) return std::nullopt;
  return GroundTruthRef{id, it->second};
}

HiddenGroundTruth hidden_ground_truth(const DatasetManifest& unlabeled) {
  std::map<std::string, fs::path> paths;
  for (const auto& e : unlabeled.entries)
    if (e.label_kind == LabelKind::Unlabeled)
      paths.emplace(e.id, unlabeled.resolve(fs::path(kHiddenGtDir) / (e.id + ".png")));
  return HiddenGroundTruth(std::move(paths));
}

GoldSplit select_gold(const DatasetManifest& manifest, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i)
    if (manifest.entries[i].label_kind == LabelKind::Gold) pool.push_back(i);
  if (n > pool.size())
    throw ManifestError("cannot select " + std::to_string(n) + " gold entries from a pool of " + std::to_string(pool.size()));

  // Partial Fisher-Yates: the first n slots become the sample.
  Rng rng(derive_seed(seed, "select_gold"));
  for (std::size_t i = 0; i < n; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
  const std::set<std::size_t> chosen(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n));

  GoldSplit split;
  for (DatasetManifest* m : {&split.gold, &split.rest, &split.test}) {
    m->root = manifest.root;
    m->base_dir = manifest.base_dir;
  }
  split.gold.name = manifest.name + ":gold";
  split.rest.name = manifest.name + ":unlabeled";
  split.test.name = manifest.name + ":test";
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const ManifestEntry& e = manifest.entries[i];
    if (e.label_kind == LabelKind::Test) {
      split.test.entries.push_back(e);
    } else if (e.label_kind == LabelKind::Gold) {
      if (chosen.count(i)) {
        split.gold.entries.push_back(e);
      } else {
        ManifestEntry hidden = e;
        hidden.label_kind = LabelKind::Unlabeled;
        hidden.mask_path.reset();
        split.rest.entries.push_back(std::move(hidden));
      }
    } else if (e.label_kind == LabelKind::Unlabeled) {
      split.rest.entries.push_back(e);
    }
  }
  split.hidden = hidden_ground_truth(split.rest);
  return split;
}

DatasetManifest assemble_augmented(const DatasetManifest& gold, const std::vector<ManifestEntry>& weak_entries) {
  if (weak_entries.empty()) return gold;
  DatasetManifest out = gold;
  std::set<std::string> ids;
  for (const auto& e : gold.entries) ids.insert(e.id);
  for (const auto& w : weak_entries) {
    if (w.label_kind != LabelKind::Weak || !w.mask_path || !w.provenance)
      throw ManifestError("weak entry '" + w.id + "' must be weak-kind with mask and provenance");
    if (w.provenance->filter_reason != "ok")
      throw ManifestError("weak entry '" + w.id + "' was rejected by the filter (" + w.provenance->filter_reason + ")");
    if (!ids.insert(w.id).second) throw ManifestError("id collision while assembling: '" + w.id + "'");
    out.entries.push_back(w);
  }
  std::size_t n_gold = 0;
  for (const auto& e : out.entries) n_gold += e.label_kind == LabelKind::Gold;
  out.name = gold.name + ":augmented(gold=" + std::to_string(n_gold) + ",weak=" + std::to_string(weak_entries.size()) + ")";
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic scenes

void SynthConfig::validate() const {
  if (width < 8 || height < 8) throw std::invalid_argument("synthetic images must be at least 8x8");
  if (n_lesions.min < 0 || n_lesions.max < n_lesions.min) throw std::invalid_argument("n_lesions range is empty");
  if (!(radius_frac.min > 0.0) || radius_frac.max < radius_frac.min) throw std::invalid_argument("radius_frac range is empty");
  if (radius_frac.max > 0.5) throw std::invalid_argument("radius_frac exceeds the image: lesions cannot fit");
  if (!(bg_level >= 0.0 && bg_level <= 1.0) || !(bg_level + contrast >= 0.0 && bg_level + contrast <= 1.0))
    throw std::invalid_argument("bg_level and contrast must keep intensities in [0,1]");
  if (noise_sigma < 0.0 || contrast_jitter < 0.0 || bg_jitter < 0.0 || shading < 0.0)
    throw std::invalid_argument("noise and jitter parameters must be >= 0");
}

SynthConfig benchmark_synth_config() {
  SynthConfig cfg;
  cfg.noise_sigma = 0.15;
  cfg.contrast_jitter = 0.2;
  cfg.bg_jitter = 0.02;
  cfg.shading = 0.15;
  return cfg;
}

Scene generate_scene(const SynthConfig& cfg, std::uint64_t scene_seed) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, scene_seed));
  const int w = cfg.width, h = cfg.height;
  const double min_side = std::min(w, h);

  const double bg = cfg.bg_level + rng.uniform(-cfg.bg_jitter, cfg.bg_jitter);
  const double contrast = cfg.contrast * (1.0 + rng.uniform(-cfg.contrast_jitter, cfg.contrast_jitter));
  const double wave_angle = rng.uniform(0.0, 2.0 * M_PI);
  const double wavelength = rng.uniform(1.0, 2.0) * std::max(w, h);
  const double phase = rng.uniform(0.0, 2.0 * M_PI);

  struct Ellipse {
    double cy, cx, a, b, cos_t, sin_t;
  };
  std::vector<Ellipse> lesions;
  const auto k = rng.between(cfg.n_lesions.min, cfg.n_lesions.max);
  for (std::int64_t i = 0; i < k; ++i) {
    const double a = rng.uniform(cfg.radius_frac.min, cfg.radius_frac.max) * min_side;
    const double b = rng.uniform(cfg.radius_frac.min, cfg.radius_frac.max) * min_side;
    const double theta = rng.uniform(0.0, M_PI);
    const double margin = std::max(a, b);
    const double cy = rng.uniform(margin, h - 1 - margin);
    const double cx = rng.uniform(margin, w - 1 - margin);
    lesions.push_back({cy, cx, a, b, std::cos(theta), std::sin(theta)});
  }

  Plane<double> img(h, w);
  BinMask gt(w, h);
  const double kx = std::cos(wave_angle) * 2.0 * M_PI / wavelength;
  const double ky = std::sin(wave_angle) * 2.0 * M_PI / wavelength;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      bool inside = false;
      for (const auto& e : lesions) {
        const double dy = r - e.cy, dx = c - e.cx;
        const double u = (dx * e.cos_t + dy * e.sin_t) / e.a;
        const double v = (-dx * e.sin_t + dy * e.cos_t) / e.b;
        if (u * u + v * v <= 1.0) {
          inside = true;
          break;
        }
      }
      gt(r, c) = inside;
      const double shade = cfg.shading * std::cos(kx * c + ky * r + phase);
      img(r, c) = bg + shade + (inside ? contrast : 0.0);
    }
  }
  for (Eigen::Index i = 0; i < img.size(); ++i)
    img.data()[i] = std::clamp(img.data()[i] + cfg.noise_sigma * rng.normal(), 0.0, 1.0);
  return {GrayImage(std::move(img)), std::move(gt)};
}

DatasetManifest generate_dataset(const SynthConfig& cfg, std::size_t n_train, std::size_t n_test,
                                 const fs::path& out_dir, unsigned jobs) {
  cfg.validate();
  const std::size_t total = n_train + n_test;
  DatasetManifest m;
  m.name = "synthetic";
  m.root = ".";
  m.base_dir = out_dir;
  m.entries.resize(total);
  fs::create_directories(out_dir / "images");
  fs::create_directories(out_dir / "masks");
  fs::create_directories(out_dir / kHiddenGtDir);

  parallel_for(total, jobs, [&](std::size_t i, unsigned) {
    const bool train = i < n_train;
    std::ostringstream id;
    id << (train ? "train_" : "test_") << std::setw(4) << std::setfill('0') << (train ? i : i - n_train);
    const Scene scene = generate_scene(cfg, i);
    ManifestEntry& e = m.entries[i];
    e.id = id.str();
    e.image_path = fs::path("images") / (e.id + ".png");
    e.mask_path = fs::path("masks") / (e.id + ".png");
    e.label_kind = train ? LabelKind::Gold : LabelKind::Test;
    save_image(scene.image, out_dir / e.image_path);
    save_mask(scene.gt, out_dir / *e.mask_path);
    if (train) save_mask(scene.gt, out_dir / kHiddenGtDir / (e.id + ".png"));
  });
  save_manifest(m, out_dir / kDatasetManifestName);
  return m;
}

}  // namespace wlforge
