#pragma once

#include "wlforge/prompts.hpp"
#include "wlforge/raster.hpp"

#include <Eigen/Core>

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace wlforge {

inline constexpr int kFeatureCount = 6;
using FeatureVector = Eigen::Matrix<double, kFeatureCount, 1>;
using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, kFeatureCount, Eigen::RowMajor>;

/// [intensity, 3x3 mean, 5x5 std, |row-h/2|/h, |col-w/2|/w, 1]. Windows are
/// truncated at the image border (only in-bounds pixels contribute).
std::array<double, kFeatureCount> pixel_features(const GrayImage& img, int row, int col);

/// Features of every pixel, one row per pixel in row-major order.
FeatureMatrix feature_matrix(const GrayImage& img);

/// Logistic pixel classifier over standardized features.
struct PixelClassifier {
  FeatureVector weights = FeatureVector::Zero();
  double bias = 0.0;
  FeatureVector feature_means = FeatureVector::Zero();
  FeatureVector feature_stds = FeatureVector::Ones();

  void validate() const;
  friend bool operator==(const PixelClassifier& a, const PixelClassifier& b) {
    return a.weights == b.weights && a.bias == b.bias && a.feature_means == b.feature_means &&
           a.feature_stds == b.feature_stds;
  }
};

struct TrainerConfig {
  int epochs = 300;
  double learn_rate = 0.5;
  /// Per-image cap on sampled pixels of each class; 0 samples every
  /// foreground pixel.
  std::size_t samples_per_class = 0;
};

struct LabeledImage {
  GrayImage image;
  BinMask mask;
};

/// Full-batch gradient descent on a balanced pixel subsample: from each image,
/// k = min(#fg, #bg) pixels of each class (capped at samples_per_class when
/// nonzero), drawn without replacement under a seed derived from `seed` and
/// the image content. When `loss_log` is given it receives the mean log-loss before
/// each update and after the last one (epochs + 1 values).
PixelClassifier fit_classifier(std::span<const LabeledImage> gold, const TrainerConfig& trainer, std::uint64_t seed,
                               std::vector<double>* loss_log = nullptr);

ProbMask predict_coarse(const PixelClassifier& model, const GrayImage& img);

class CoarseSegmenter {
 public:
  virtual ~CoarseSegmenter() = default;
  virtual ProbMask predict(const GrayImage& img) const = 0;
};

class ClassifierSegmenter final : public CoarseSegmenter {
 public:
  explicit ClassifierSegmenter(PixelClassifier model) : model_(std::move(model)) {}
  ProbMask predict(const GrayImage& img) const override { return predict_coarse(model_, img); }

 private:
  PixelClassifier model_;
};

// ---------------------------------------------------------------------------
// Promptable segmentation

/// Share of the frame a box must exceed before the mock over-segments.
inline constexpr double kLeakOnset = 0.5;

/// Mock promptable segmenter behaviour. `box_leak` models over-segmentation
/// on uninformative boxes: when a box covers a share a > kLeakOnset of the
/// image, its result grows by round(box_leak * (a - onset) / (1 - onset))
/// pixels inside the dilated box.
struct OracleFidelity {
  int dilate = 0;
  double noise_rate = 0.0;
  int flip_band = 1;
  int box_leak = 0;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const OracleFidelity&, const OracleFidelity&) = default;
};

struct FidelityPreset {
  std::string name;
  OracleFidelity fidelity;
};

FidelityPreset medsam_like();
FidelityPreset sam_like();
FidelityPreset perfect_oracle();
/// Looks up "medsam-like", "sam-like" or "perfect".
FidelityPreset fidelity_preset(const std::string& name);

/// Radius within which a positive point that misses the target snaps to the
/// nearest target component.
inline constexpr int kPointSnapRadius = 5;

BinMask oracle_prompted(const BinMask& gt, std::span<const Prompt> prompts, const OracleFidelity& fid);
BinMask oracle_prompted(const BinMask& gt, const Prompt& prompt, const OracleFidelity& fid);

/// Pixels within Chebyshev distance `band` of the opposite class.
BinMask boundary_band(const BinMask& mask, int band);

enum class BackendKind { MockOracle, External };

struct ExternalBackendConfig {
  std::vector<std::string> command;
  double timeout_seconds = 30.0;
  /// Fidelity forwarded to echo-oracle sidecars as a request extension.
  std::optional<OracleFidelity> oracle_hints;
};

struct BackendConfig {
  BackendKind kind = BackendKind::MockOracle;
  std::string preset = "medsam-like";
  OracleFidelity fidelity = medsam_like().fidelity;
  ExternalBackendConfig external;

  [[nodiscard]] std::string name() const;
  void validate() const;
};

/// Hidden ground truth reference for one image: its id and mask path.
struct GroundTruthRef {
  std::string id;
  std::filesystem::path path;
};

class PromptableSegmenter {
 public:
  virtual ~PromptableSegmenter() = default;
  /// Union of the per-prompt results; dims match `img`.
  virtual BinMask segment(const GrayImage& img, std::span<const Prompt> prompts, const GroundTruthRef* gt) = 0;
  [[nodiscard]] virtual std::string name() const = 0;
};

/// Fidelity with the seed replaced by a per-image derivation, so noise is
/// independent of processing order and identical across backends.
OracleFidelity per_image_fidelity(const OracleFidelity& base, const std::string& image_id);

class MockOracleSegmenter final : public PromptableSegmenter {
 public:
  MockOracleSegmenter(OracleFidelity fidelity, std::string preset_name);
  BinMask segment(const GrayImage& img, std::span<const Prompt> prompts, const GroundTruthRef* gt) override;
  [[nodiscard]] std::string name() const override { return "mock_oracle:" + preset_; }

 private:
  OracleFidelity fidelity_;
  std::string preset_;
};

std::unique_ptr<PromptableSegmenter> make_segmenter(const BackendConfig& backend);

/// One-shot dispatch; the external kind spawns a sidecar for the call.
BinMask predict_prompted(const BackendConfig& backend, const GrayImage& img, std::span<const Prompt> prompts,
                         const GroundTruthRef* gt);

}  // namespace wlforge
