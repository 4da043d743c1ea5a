#pragma once

#include "wlforge/raster.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace wlforge {

enum class FilterReason { Ok, EmptyCoarse, OverForeground, OverBackground };

std::string to_string(FilterReason reason);
FilterReason parse_filter_reason(const std::string& text);

struct FilterVerdict {
  bool accepted = false;
  FilterReason reason = FilterReason::Ok;
  double fg_fraction = 0.0;
};

inline constexpr double kDefaultFilterTau = 0.97;

/// Share of `count` in `total` in basis points (1/10000), rounded half up,
/// computed in integer arithmetic.
std::uint64_t basis_points(std::uint64_t count, std::uint64_t total);

/// Degenerate-mask filter: rejects when either class holds more than
/// tau_filter of the pixels, compared at basis-point resolution. Depends on
/// the mask alone and is symmetric under complement.
FilterVerdict accept_weak_label(const BinMask& mask, double tau_filter = kDefaultFilterTau);

double dice(const BinMask& a, const BinMask& b);
double iou(const BinMask& a, const BinMask& b);
double pixel_accuracy(const BinMask& a, const BinMask& b);

struct ImageScore {
  double dice = 0.0;
  double iou = 0.0;
};

struct Evaluation {
  double mean_dice = 0.0;
  double mean_iou = 0.0;
  std::vector<ImageScore> per_image;
};

/// Unweighted per-image means.
Evaluation evaluate(std::span<const BinMask> predictions, std::span<const BinMask> gts);

enum class EvalPromptMode { AutoNone, Box, Points };
std::string to_string(EvalPromptMode mode);
EvalPromptMode parse_eval_prompt_mode(const std::string& text);

struct EvalRow {
  std::string dataset;
  std::size_t n_gold = 0;
  std::size_t n_weak = 0;
  EvalPromptMode prompt_mode = EvalPromptMode::AutoNone;
  std::string strategy;
  std::string backend;
  double mean_dice = 0.0;
  double mean_iou = 0.0;
  std::size_t n_test = 0;
  std::uint64_t seed = 0;
  /// Requested weak count; differs from n_weak when the pool ran short.
  std::size_t n_weak_target = 0;
};

}  // namespace wlforge
