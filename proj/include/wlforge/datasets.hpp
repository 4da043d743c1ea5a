#pragma once

#include "wlforge/raster.hpp"
#include "wlforge/segmenter.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace wlforge {

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LabelKind { Gold, Weak, Unlabeled, Test };
std::string to_string(LabelKind kind);
LabelKind parse_label_kind(const std::string& text);

struct Provenance {
  std::string strategy;
  std::string prompt_mode;
  std::string backend;
  std::string fidelity_preset;
  std::string config_hash;
  std::string filter_reason;
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct ManifestEntry {
  std::string id;
  std::filesystem::path image_path;
  std::optional<std::filesystem::path> mask_path;
  LabelKind label_kind = LabelKind::Unlabeled;
  std::optional<Provenance> provenance;
  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// Entry paths are relative to `root` unless absolute; a relative root is
/// itself relative to the directory holding the manifest file.
struct DatasetManifest {
  std::string name;
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;
  /// Directory of the file this manifest was loaded from; not serialized.
  std::filesystem::path base_dir;

  [[nodiscard]] std::filesystem::path resolve(const std::filesystem::path& p) const;
  [[nodiscard]] std::vector<const ManifestEntry*> of_kind(LabelKind kind) const;
  /// Checks entry invariants; with `strict`, also that every referenced file exists.
  void validate(bool strict = false) const;

  friend bool operator==(const DatasetManifest& a, const DatasetManifest& b) {
    return a.name == b.name && a.root == b.root && a.entries == b.entries;
  }
};

inline constexpr int kManifestVersion = 1;

DatasetManifest load_manifest(const std::filesystem::path& path, bool strict_validate = false);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Ground truth of nominally unlabeled images. This is the only route from an
/// unlabeled entry to its mask; the unlabeled manifest view carries none.
class HiddenGroundTruth {
 public:
  HiddenGroundTruth() = default;
  explicit HiddenGroundTruth(std::map<std::string, std::filesystem::path> paths) : paths_(std::move(paths)) {}

  [[nodiscard]] std::optional<GroundTruthRef> handle(const std::string& id) const;
  [[nodiscard]] std::size_t size() const { return paths_.size(); }

 private:
  std::map<std::string, std::filesystem::path> paths_;
};

/// Hidden ground truth of a dataset root: <root>/hidden_gt/<id>.png per id.
HiddenGroundTruth hidden_ground_truth(const DatasetManifest& unlabeled);

struct GoldSplit {
  DatasetManifest gold;
  DatasetManifest rest;  // relabeled unlabeled, masks stripped
  DatasetManifest test;
  HiddenGroundTruth hidden;
};

/// Seeded uniform sample of n gold-kind entries without replacement; every
/// manifest keeps the input order.
GoldSplit select_gold(const DatasetManifest& manifest, std::size_t n, std::uint64_t seed);

/// Gold entries first, then weak entries; every weak entry must carry an
/// accepted ("ok") provenance record.
DatasetManifest assemble_augmented(const DatasetManifest& gold, const std::vector<ManifestEntry>& weak_entries);

template <typename T>
struct Range {
  T min{};
  T max{};
};

struct SynthConfig {
  int width = 128;
  int height = 128;
  Range<int> n_lesions{1, 2};
  Range<double> radius_frac{0.10, 0.25};
  double contrast = 0.35;
  double bg_level = 0.30;
  double noise_sigma = 0.08;
  std::uint64_t seed = 0;
  /// Per-scene variation: contrast scales by 1 + U(-contrast_jitter, contrast_jitter),
  /// background shifts by U(-bg_jitter, bg_jitter), and a plane-wave shading
  /// field of amplitude `shading` is added.
  double contrast_jitter = 0.0;
  double bg_jitter = 0.0;
  double shading = 0.0;

  void validate() const;
};

/// The benchmark corpus used by the pipeline tests and reports.
SynthConfig benchmark_synth_config();

struct Scene {
  GrayImage image;
  BinMask gt;
};

Scene generate_scene(const SynthConfig& cfg, std::uint64_t scene_seed);

/// Writes images/, masks/, hidden_gt/ and manifest.jsonl under out_dir.
/// Train entries are gold-kind (their masks also copied to hidden_gt/),
/// test entries are test-kind.
DatasetManifest generate_dataset(const SynthConfig& cfg, std::size_t n_train, std::size_t n_test,
                                 const std::filesystem::path& out_dir, unsigned jobs = 1);

inline constexpr const char* kDatasetManifestName = "manifest.jsonl";
inline constexpr const char* kHiddenGtDir = "hidden_gt";

}  // namespace wlforge
