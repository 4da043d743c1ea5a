#pragma once

#include "wlforge/datasets.hpp"
#include "wlforge/prompts.hpp"
#include "wlforge/quality.hpp"
#include "wlforge/segmenter.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace wlforge {

class PipelineError : public std::runtime_error {
 public:
  PipelineError(const std::string& stage, const std::string& what)
      : std::runtime_error("stage " + stage + ": " + what), stage_(stage) {}
  [[nodiscard]] const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct PipelineConfig {
  std::filesystem::path dataset;
  std::size_t n_gold = 5;
  std::vector<std::size_t> n_weak_targets{0, 25, 50, 100};
  PromptSpec prompt_spec;
  BackendConfig backend;
  double tau_filter = kDefaultFilterTau;
  TrainerConfig trainer;
  std::vector<EvalPromptMode> eval_prompt_modes{EvalPromptMode::AutoNone, EvalPromptMode::Box, EvalPromptMode::Points};
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path out_dir = "out";

  void validate() const;
};

/// Settings of the synthetic benchmark runs: seeds 0-4 and a per-image
/// sample cap of 4 pixels per class, so label count limits the model.
PipelineConfig benchmark_pipeline_config();

struct FilterCounts {
  std::size_t attempted = 0;
  std::size_t coarse_empty = 0;
  std::size_t filtered_over_fg = 0;
  std::size_t filtered_over_bg = 0;
  std::size_t accepted = 0;

  FilterCounts& operator+=(const FilterCounts& o);
  [[nodiscard]] bool reconciles() const {
    return attempted == accepted + coarse_empty + filtered_over_fg + filtered_over_bg;
  }
};

struct RunRecord {
  std::map<std::string, double> stage_seconds;
  FilterCounts counts;
  std::string config_hash;
  bool warm_start = false;
  std::vector<std::string> warnings;

  void merge(const RunRecord& other);
};

/// Stage names passed to PipelineHooks::on_stage.
namespace stage {
inline constexpr const char* kSelectGold = "select_gold";
inline constexpr const char* kFitGold = "fit_gold";
inline constexpr const char* kBaselineEval = "baseline_eval";
inline constexpr const char* kPredictCoarse = "predict_coarse";
inline constexpr const char* kWeakLabel = "weak_label";  // prompts, segmenter, filter
inline constexpr const char* kAssemble = "assemble";
inline constexpr const char* kRefit = "refit";
inline constexpr const char* kEvaluate = "evaluate";
}  // namespace stage

/// Training stages never read hidden ground truth.
bool is_training_stage(const std::string& name);

struct PipelineHooks {
  /// Replaces the coarse segmenter used for the unlabeled pool.
  std::function<std::unique_ptr<CoarseSegmenter>(const PixelClassifier&)> coarse_factory;
  /// Called when a stage begins.
  std::function<void(const std::string&)> on_stage;
};

struct RunOptions {
  unsigned jobs = 1;
  PipelineHooks hooks;
};

struct PipelineResult {
  std::vector<EvalRow> rows;
  RunRecord record;
};

PipelineResult run_pipeline(const PipelineConfig& cfg, const RunOptions& options = {});

/// Per gold count: a gold-only row and a gold+weak row per seed, first
/// non-auto prompt mode of cfg.
PipelineResult run_gold_sweep(const PipelineConfig& cfg, const std::vector<std::size_t>& gold_counts,
                              std::size_t n_weak, const RunOptions& options = {});

/// One run per preset on the mock backend, weak targets {0, max target}.
PipelineResult run_fidelity_sweep(const PipelineConfig& cfg, const std::vector<FidelityPreset>& presets,
                                  const RunOptions& options = {});

/// Box-mode rows for the coarse, darkest and full_box strategies under
/// identical seeds and backend, weak targets {0, max target}.
PipelineResult run_strategy_comparison(const PipelineConfig& cfg, const RunOptions& options = {});

struct ReportPaths {
  std::filesystem::path csv;
  std::filesystem::path markdown;
  std::filesystem::path record;
};

inline constexpr const char* kRowsCsvHeader = "dataset,n_gold,n_weak,prompt_mode,strategy,backend,seed,mean_dice,mean_iou,n_test";

std::string rows_to_csv(const std::vector<EvalRow>& rows);
std::vector<EvalRow> rows_from_csv(const std::string& text);
/// Grid per (dataset, n_gold, strategy, backend): rows are weak counts,
/// columns prompt modes, cells the seed-mean DICE to 4 decimals.
std::string rows_to_markdown(const std::vector<EvalRow>& rows);

ReportPaths emit_report(const std::vector<EvalRow>& rows, const RunRecord& record, const std::filesystem::path& out_dir);

/// Shared helpers, also used by the stage-by-stage CLI so both paths produce
/// the same artifacts.
std::vector<LabeledImage> load_labeled(const DatasetManifest& manifest);
std::uint64_t fit_seed(std::uint64_t seed);
BinMask segment_prediction(const PixelClassifier& model, const GrayImage& img, double tau);
Evaluation evaluate_model(const PixelClassifier& model, const DatasetManifest& test, double tau);
Evaluation evaluate_model(const PixelClassifier& model, std::span<const LabeledImage> test, double tau);

/// Copy whose root is absolute, so it can be saved anywhere.
DatasetManifest with_absolute_root(const DatasetManifest& manifest);
/// Backend whose oracle noise seed also depends on the run seed.
BackendConfig seeded_backend(const BackendConfig& backend, std::uint64_t run_seed);

Provenance make_provenance(const PromptSpec& spec, const BackendConfig& backend, const std::string& config_hash,
                           FilterReason reason);
/// Candidate record for one pool image. Empty-coarse samples stay unlabeled
/// and carry no mask.
ManifestEntry candidate_entry(const ManifestEntry& pool_entry, const std::filesystem::path& mask_path,
                              Provenance provenance);

struct WeakLabelBatch {
  std::vector<ManifestEntry> candidates;  // pool order
  FilterCounts counts;
};

/// Prompts, promptable segmentation and filtering for every pool image.
/// Weak masks go to weak_dir/<id>.png, rejected ones included.
WeakLabelBatch label_pool(const DatasetManifest& pool, std::span<const ProbMask> coarse, const HiddenGroundTruth& hidden,
                          const PromptSpec& spec, const BackendConfig& backend, double tau_filter,
                          const std::filesystem::path& weak_dir, const std::string& config_hash, unsigned jobs);

/// First n accepted candidates in order.
std::vector<ManifestEntry> take_accepted(const std::vector<ManifestEntry>& candidates, std::size_t n);

}  // namespace wlforge
